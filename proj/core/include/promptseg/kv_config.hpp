#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace promptseg {

/// Line-oriented `key = value` text. `#` starts a comment; keys may repeat.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const;
    /// Last value given for `key`.
    const std::string& get(const std::string& key) const;
    std::vector<std::string> get_all(const std::string& key) const;

    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Whitespace- or comma-separated numbers.
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<int> get_ints(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    void set(const std::string& key, const std::string& value);
    std::string to_string() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Splits on whitespace and commas.
std::vector<std::string> split_tokens(std::string_view s);
std::vector<double> parse_doubles(std::string_view s);
/// `a=b` attribute tokens, as used by phantom object lines.
std::map<std::string, std::string> parse_attributes(const std::vector<std::string>& tokens, std::size_t first);

}  // namespace promptseg
