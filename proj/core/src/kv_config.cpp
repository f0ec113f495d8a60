#include "promptseg/kv_config.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

#include "promptseg/error.hpp"
#include "promptseg/nifti.hpp"

namespace promptseg {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

double to_double(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::Parse, "config key '" + key + "': expected a number, got '" + s + "'");
    }
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<double> parse_doubles(std::string_view s) {
    std::vector<double> out;
    for (const auto& t : split_tokens(s)) out.push_back(to_double("value", t));
    return out;
}

std::map<std::string, std::string> parse_attributes(const std::vector<std::string>& tokens,
                                                    std::size_t first) {
    // Attribute values may themselves be comma lists, which split_tokens broke apart:
    // re-join bare tokens onto the preceding attribute.
    std::map<std::string, std::string> attrs;
    std::string last;
    for (std::size_t i = first; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            if (last.empty()) throw Error(ErrorCode::Parse, "unexpected token '" + t + "'");
            attrs[last] += " " + t;
            continue;
        }
        last = t.substr(0, eq);
        attrs[last] = t.substr(eq + 1);
    }
    return attrs;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
    KeyValueConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::Parse, "config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) {
            throw Error(ErrorCode::Parse, "config line " + std::to_string(lineno) + ": empty key");
        }
        cfg.entries_.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    return parse(nifti::read_file(path));
}

bool KeyValueConfig::has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return true;
    return false;
}

const std::string& KeyValueConfig::get(const std::string& key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
        if (it->first == key) return it->second;
    throw Error(ErrorCode::Parse, "missing config key '" + key + "'");
}

std::vector<std::string> KeyValueConfig::get_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k == key) out.push_back(v);
    return out;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, get(key)) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const auto& s = get(key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::Parse, "config key '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw Error(ErrorCode::Parse, "config key '" + key + "': expected a boolean, got '" + s + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : split_tokens(get(key))) out.push_back(to_double(key, t));
    return out;
}

std::vector<int> KeyValueConfig::get_ints(const std::string& key) const {
    std::vector<int> out;
    for (double d : get_doubles(key)) {
        if (d != static_cast<int>(d)) {
            throw Error(ErrorCode::Parse, "config key '" + key + "': expected integers");
        }
        out.push_back(static_cast<int>(d));
    }
    return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

std::string KeyValueConfig::to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace promptseg
