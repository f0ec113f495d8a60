#include "promptseg/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <random>

#include "httplib.h"
#include "json.hpp"

namespace promptseg {

using nlohmann::json;

namespace {

json box_json(const PatchRef& p) {
    return {{"start", {p.start.x, p.start.y, p.start.z}}, {"size", {p.size.x, p.size.y, p.size.z}}};
}

json delta_json(const MaskDelta& d) {
    return {{"bbox", box_json(d.bbox)},
            {"rle", base64_encode(runs_to_bytes(d.runs))},
            {"encoding", "rle-u32le"},
            {"changed_voxels", d.changed}};
}

ServiceResponse ok_json(const json& j, int status = 200) {
    return {status, "application/json", j.dump()};
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int parse_int(std::string_view s, const char* what) {
    int v = 0;
    try {
        std::size_t used = 0;
        v = std::stoi(std::string(s), &used);
        if (used != s.size()) throw std::invalid_argument(what);
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidInput, std::string(what) + " must be an integer");
    }
    return v;
}

double param_double(const std::map<std::string, std::string>& params, const std::string& key, double fallback) {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidInput, key + " must be a number");
    }
}

template <class F>
ServiceResponse guarded(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return error_response(e.code(), e.what());
    } catch (const json::exception& e) {
        return error_response(ErrorCode::Parse, std::string("malformed JSON body: ") + e.what());
    } catch (const std::exception& e) {
        ServiceResponse r = error_response(ErrorCode::Io, e.what());
        r.status = 500;
        return r;
    }
}

}  // namespace

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::NothingToUndo: return 409;
        case ErrorCode::Busy: return 503;
        case ErrorCode::TrainingDivergence: return 500;
        case ErrorCode::InvalidInput:
        case ErrorCode::ShapeMismatch:
        case ErrorCode::NoForeground:
        case ErrorCode::Io:
        case ErrorCode::Parse: return 400;
    }
    return 500;
}

ServiceResponse error_response(ErrorCode code, std::string_view message) {
    json j{{"error", {{"code", error_code_name(code)}, {"message", std::string(message)}}}};
    return {http_status(code), "application/json", j.dump()};
}

ServiceOptions service_options_from_env(ServiceOptions base) {
    if (const char* ttl = std::getenv("PROMPTSEG_SESSION_TTL")) {
        base.session_ttl = std::chrono::seconds(parse_int(ttl, "PROMPTSEG_SESSION_TTL"));
    }
    if (const char* cap = std::getenv("PROMPTSEG_MAX_SESSIONS")) {
        const int n = parse_int(cap, "PROMPTSEG_MAX_SESSIONS");
        if (n < 1) throw Error(ErrorCode::InvalidInput, "PROMPTSEG_MAX_SESSIONS must be positive");
        base.max_sessions = static_cast<std::size_t>(n);
    }
    return base;
}

struct Service::Entry {
    std::mutex mutex;
    std::string id;
    std::string source_name;
    std::string created_at;
    WorkingImage image;
    Session session;
    Mask source_mask;
    std::vector<TranscriptEntry> transcript;
    Clock::time_point last_used;

    json handle() const {
        const auto& e = image.source.data.extent();
        const auto& w = image.working.extent();
        return {{"id", id},
                {"volume_meta",
                 {{"shape", {e.x, e.y, e.z}},
                  {"spacing", image.source.spacing},
                  {"working_shape", {w.x, w.y, w.z}},
                  {"source", source_name}}},
                {"created_at", created_at},
                {"action_count", session.history.size()}};
    }
};

Service::Service(const Engine& engine, ServiceOptions options)
    : engine_(engine), options_(options), now_([] { return Clock::now(); }) {
    std::random_device rd;
    id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

Service::~Service() = default;

void Service::set_clock(std::function<Clock::time_point()> now) {
    std::lock_guard lock(mutex_);
    now_ = std::move(now);
}

std::size_t Service::session_count() {
    std::lock_guard lock(mutex_);
    evict_idle_locked(now_());
    return sessions_.size();
}

void Service::evict_idle_locked(Clock::time_point now) {
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now - it->second->last_used > options_.session_ttl) {
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
}

std::string Service::next_id() {
    const std::uint64_t n = ++counter_;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%016llx%08llx", static_cast<unsigned long long>(mix_seed(id_salt_, n)),
                  static_cast<unsigned long long>(n));
    return buf;
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto now = now_();
    evict_idle_locked(now);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no live session '" + id + "'");
    it->second->last_used = now;
    return it->second;
}

ServiceResponse Service::create_session(std::string_view body, std::string_view content_type,
                                        std::string_view source_name) {
    return guarded([&] {
        std::string name(source_name);
        nifti::Image img;
        if (content_type.starts_with("application/json")) {
            const json req = json::parse(body);
            if (!req.contains("path") || !req["path"].is_string()) {
                throw Error(ErrorCode::InvalidInput, "JSON body needs a string field 'path'");
            }
            const std::string path = req["path"];
            img = nifti::read(path);
            if (name.empty()) name = std::filesystem::path(path).filename().string();
        } else {
            if (body.empty()) throw Error(ErrorCode::InvalidInput, "request body holds no volume");
            img = nifti::decode(body);
        }
        auto entry = std::make_shared<Entry>();
        entry->source_name = name.empty() ? "upload" : name;
        entry->created_at = utc_now();
        entry->image = prepare_working_image(std::move(img), options_.preprocess);
        entry->session = engine_.new_session(entry->image.working);
        entry->source_mask = Mask(entry->image.source.data.extent());

        std::lock_guard lock(mutex_);
        const auto now = now_();
        evict_idle_locked(now);
        if (sessions_.size() >= options_.max_sessions) {
            throw Error(ErrorCode::Busy, "session limit reached (" + std::to_string(options_.max_sessions) + ")");
        }
        entry->id = next_id();
        entry->last_used = now;
        sessions_[entry->id] = entry;
        return ok_json(entry->handle(), 201);
    });
}

ServiceResponse Service::apply_click(const std::string& id, std::string_view body) {
    return guarded([&] {
        const json req = json::parse(body);
        for (const char* k : {"x", "y", "z"}) {
            if (!req.contains(k) || !req[k].is_number_integer()) {
                throw Error(ErrorCode::InvalidInput, std::string("click needs an integer '") + k + "'");
            }
        }
        const Index3 p{req["x"].get<int>(), req["y"].get<int>(), req["z"].get<int>()};
        const Polarity pol = parse_polarity(req.value("polarity", std::string("positive")));
        const bool cpp = req.value("cpp", false);

        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        const auto t0 = Clock::now();
        const Click click{entry->image.to_working(p), pol};
        const ActionResult result = engine_.click(entry->session, click, cpp);
        Mask now_mask = entry->image.to_source(entry->session.mask);
        const MaskDelta delta = mask_delta(entry->source_mask, now_mask);
        entry->source_mask = std::move(now_mask);
        const double elapsed = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        entry->transcript.push_back({TranscriptEntry::Kind::Click, {p, pol}, cpp});

        json j = delta_json(delta);
        j["elapsed_ms"] = elapsed;
        j["action_count"] = entry->session.history.size();
        j["patch"] = box_json(result.patch);
        j["synthetic_clicks"] = result.propagation.synthetic_clicks.size();
        return ok_json(j);
    });
}

ServiceResponse Service::undo(const std::string& id) {
    return guarded([&] {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        engine_.undo(entry->session);
        Mask now_mask = entry->image.to_source(entry->session.mask);
        const MaskDelta delta = mask_delta(entry->source_mask, now_mask);
        entry->source_mask = std::move(now_mask);
        entry->transcript.push_back({TranscriptEntry::Kind::Undo, {}, false});
        json j = delta_json(delta);
        j["action_count"] = entry->session.history.size();
        return ok_json(j);
    });
}

ServiceResponse Service::reset(const std::string& id) {
    return guarded([&] {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        engine_.reset(entry->session);
        const Mask empty(entry->source_mask.extent());
        const MaskDelta delta = mask_delta(entry->source_mask, empty);
        entry->source_mask = empty;
        entry->transcript.push_back({TranscriptEntry::Kind::Reset, {}, false});
        json j = delta_json(delta);
        j["action_count"] = entry->session.history.size();
        return ok_json(j);
    });
}

ServiceResponse Service::export_mask(const std::string& id) {
    return guarded([&] {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        return ServiceResponse{200, "application/octet-stream", entry->image.export_mask(entry->session.mask)};
    });
}

ServiceResponse Service::transcript(const std::string& id) {
    return guarded([&] {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        return ServiceResponse{200, "text/plain", format_transcript(entry->transcript)};
    });
}

ServiceResponse Service::slice(const std::string& id, std::string_view axis_name, std::string_view index_text,
                               const std::map<std::string, std::string>& params) {
    return guarded([&] {
        int axis = -1;
        if (axis_name == "axial" || axis_name == "z" || axis_name == "2") axis = 2;
        if (axis_name == "coronal" || axis_name == "y" || axis_name == "1") axis = 1;
        if (axis_name == "sagittal" || axis_name == "x" || axis_name == "0") axis = 0;
        if (axis < 0) throw Error(ErrorCode::InvalidInput, "axis must be axial, coronal or sagittal");
        const int index = parse_int(index_text, "index");
        const double lo = param_double(params, "window_lo", -500.0);
        const double hi = param_double(params, "window_hi", 800.0);
        const double opacity = param_double(params, "opacity", 0.4);
        if (!(lo < hi)) throw Error(ErrorCode::InvalidInput, "window_lo must be below window_hi");
        if (!(opacity >= 0.0 && opacity <= 1.0)) throw Error(ErrorCode::InvalidInput, "opacity must lie in [0, 1]");

        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        const auto& vol = entry->image.source.data;
        const auto& e = vol.extent();
        if (index < 0 || index >= e[axis]) throw Error(ErrorCode::InvalidInput, "slice index out of range");

        // Image columns follow the lower remaining axis, rows the higher one.
        const int col_axis = axis == 0 ? 1 : 0;
        const int row_axis = axis == 2 ? 1 : 2;
        const int w = e[col_axis], h = e[row_axis];
        std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                Index3 p{};
                p[axis] = index;
                p[col_axis] = c;
                p[row_axis] = r;
                const double g = std::clamp((vol(p) - lo) / (hi - lo), 0.0, 1.0) * 255.0;
                double red = g, green = g, blue = g;
                if (entry->source_mask(p)) {
                    red = (1 - opacity) * g + opacity * 255.0;
                    green = (1 - opacity) * g;
                    blue = (1 - opacity) * g;
                }
                auto* px = &rgb[(static_cast<std::size_t>(r) * w + c) * 3];
                px[0] = static_cast<std::uint8_t>(std::lround(red));
                px[1] = static_cast<std::uint8_t>(std::lround(green));
                px[2] = static_cast<std::uint8_t>(std::lround(blue));
            }
        }
        return ServiceResponse{200, "image/png", encode_png_rgb(w, h, rgb)};
    });
}

ServiceResponse Service::delete_session(const std::string& id) {
    return guarded([&] {
        std::lock_guard lock(mutex_);
        if (sessions_.erase(id) == 0) throw Error(ErrorCode::NotFound, "no live session '" + id + "'");
        return ok_json({{"deleted", id}});
    });
}

ServiceResponse Service::healthz() {
    return ok_json({{"status", "ok"}, {"sessions", session_count()}});
}

void Service::mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.set_payload_max_length(std::size_t{1} << 31);
    server.Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
        const std::string name = req.has_param("name") ? req.get_param_value("name") : "";
        send(res, create_session(req.body, req.get_header_value("Content-Type"), name));
    });
    server.Post(R"(/sessions/([0-9a-f]+)/clicks)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, apply_click(req.matches[1], req.body));
    });
    server.Post(R"(/sessions/([0-9a-f]+)/undo)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, undo(req.matches[1]));
    });
    server.Post(R"(/sessions/([0-9a-f]+)/reset)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, reset(req.matches[1]));
    });
    server.Get(R"(/sessions/([0-9a-f]+)/mask)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, export_mask(req.matches[1]));
    });
    server.Get(R"(/sessions/([0-9a-f]+)/transcript)",
               [this, send](const httplib::Request& req, httplib::Response& res) {
                   send(res, transcript(req.matches[1]));
               });
    server.Get(R"(/sessions/([0-9a-f]+)/slice)", [this, send](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> params;
        for (const auto& [k, v] : req.params) params[k] = v;
        send(res, slice(req.matches[1], req.get_param_value("axis"), req.get_param_value("index"), params));
    });
    server.Delete(R"(/sessions/([0-9a-f]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, delete_session(req.matches[1]));
    });
    server.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, healthz()); });
}

}  // namespace promptseg
