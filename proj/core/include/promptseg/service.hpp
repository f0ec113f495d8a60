#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "promptseg/codec.hpp"
#include "promptseg/infer.hpp"

namespace httplib {
class Server;
}

namespace promptseg {

struct ServiceOptions {
    std::size_t max_sessions = 16;
    std::chrono::seconds session_ttl{1800};
    PreprocessOptions preprocess;
};

/// Reads PROMPTSEG_SESSION_TTL (seconds) and PROMPTSEG_MAX_SESSIONS over the defaults.
ServiceOptions service_options_from_env(ServiceOptions base = {});

struct ServiceResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Session-oriented front end of the interactive engine. Every handler is safe to call from
/// concurrent request threads; actions on one session are serialized by a per-session lock.
class Service {
public:
    using Clock = std::chrono::steady_clock;

    Service(const Engine& engine, ServiceOptions options = {});
    ~Service();

    /// Body is raw NIfTI bytes (optionally gzip-compressed), or JSON {"path": "..."} naming a
    /// server-side file when content_type is application/json.
    ServiceResponse create_session(std::string_view body, std::string_view content_type,
                                   std::string_view source_name = {});
    /// JSON {"x", "y", "z", "polarity", "cpp"} in source-grid voxel coordinates.
    ServiceResponse apply_click(const std::string& id, std::string_view body);
    ServiceResponse undo(const std::string& id);
    ServiceResponse reset(const std::string& id);
    ServiceResponse export_mask(const std::string& id);
    ServiceResponse transcript(const std::string& id);
    /// axis: axial|coronal|sagittal (or z|y|x); window_lo/window_hi in HU; opacity in [0, 1].
    ServiceResponse slice(const std::string& id, std::string_view axis, std::string_view index,
                          const std::map<std::string, std::string>& params = {});
    ServiceResponse delete_session(const std::string& id);
    ServiceResponse healthz();

    /// Registers every endpoint on the server.
    void mount(httplib::Server& server);

    std::size_t session_count();
    /// Test hook: replaces the clock used for idle eviction.
    void set_clock(std::function<Clock::time_point()> now);

private:
    struct Entry;

    std::shared_ptr<Entry> find(const std::string& id);
    void evict_idle_locked(Clock::time_point now);
    std::string next_id();

    const Engine& engine_;
    ServiceOptions options_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t counter_ = 0;
    std::uint64_t id_salt_ = 0;
    std::function<Clock::time_point()> now_;
};

/// JSON error body {"error": {"code": ..., "message": ...}} and its HTTP status.
ServiceResponse error_response(ErrorCode code, std::string_view message);
int http_status(ErrorCode code);

}  // namespace promptseg
