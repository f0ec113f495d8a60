#include <gtest/gtest.h>
#include <httplib.h>

#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "promptseg/phantom.hpp"
#include "promptseg/service.hpp"

using namespace promptseg;
using json = nlohmann::json;

namespace {

// 1.5 mm isotropic input, so the working grid is the source grid and oracle masks line up.
struct Fixture {
    Volume volume;
    Mask sphere;
    std::string nii;
    OracleSegmentation seg;
    Engine engine;

    static std::pair<Volume, LabelMap> phantom() {
        return make_phantom(parse_phantom_spec("extent = 48 44 40\n"
                                               "spacing = 1.5 1.5 1.5\n"
                                               "shape = sphere label=1 center=20,22,20 radius=7 offset_hu=300\n"
                                               "shape = box label=2 center=38,10,8 half=4,4,4 offset_hu=200\n"),
                            11);
    }
    explicit Fixture(std::pair<Volume, LabelMap> p = phantom())
        : volume(p.first),
          sphere(label_mask(p.second.labels, 1)),
          nii(nifti::encode(volume.data, volume.spacing, nifti::DataType::Int16)),
          seg(sphere, Extent3::cube(32)),
          engine(seg) {}
};

json body_of(const ServiceResponse& r) { return json::parse(r.body); }

std::string click_json(int x, int y, int z, const char* polarity = "positive") {
    return json{{"x", x}, {"y", y}, {"z", z}, {"polarity", polarity}}.dump();
}

MaskDelta delta_from(const json& j) {
    MaskDelta d;
    for (int a = 0; a < 3; ++a) {
        d.bbox.start[a] = j["bbox"]["start"][a];
        d.bbox.size[a] = j["bbox"]["size"][a];
    }
    d.runs = runs_from_bytes(base64_decode(j["rle"].get<std::string>()));
    d.changed = j["changed_voxels"];
    return d;
}

Mask decode_mask(const std::string& bytes) {
    const auto img = nifti::decode(bytes);
    Mask m(img.data.extent());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.data[i] > 0.5f ? 1 : 0;
    return m;
}

std::string create(Service& s, const Fixture& f) {
    const auto r = s.create_session(f.nii, "application/octet-stream");
    EXPECT_EQ(r.status, 201) << r.body;
    return body_of(r)["id"];
}

}  // namespace

TEST(Service, CreateReportsSourceMetadata) {
    Fixture f;
    Service s(f.engine);
    const auto r = s.create_session(f.nii, "application/octet-stream", "phantom.nii");
    ASSERT_EQ(r.status, 201);
    const json j = body_of(r);
    EXPECT_EQ(j["volume_meta"]["shape"], (json{48, 44, 40}));
    EXPECT_EQ(j["volume_meta"]["working_shape"], (json{48, 44, 40}));
    EXPECT_EQ(j["volume_meta"]["spacing"], (json{1.5, 1.5, 1.5}));
    EXPECT_EQ(j["volume_meta"]["source"], "phantom.nii");
    EXPECT_EQ(j["action_count"], 0);
    EXPECT_EQ(j["id"].get<std::string>().size(), 24u);
    EXPECT_NE(j["id"], body_of(s.create_session(f.nii, "application/octet-stream"))["id"]);
    EXPECT_EQ(s.session_count(), 2u);
}

TEST(Service, CreateFromServerSidePath) {
    Fixture f;
    Service s(f.engine);
    const auto path = std::filesystem::temp_directory_path() / "promptseg_service_path.nii.gz";
    nifti::write_file(path, nifti::gzip(f.nii));
    const auto r = s.create_session(json{{"path", path.string()}}.dump(), "application/json");
    ASSERT_EQ(r.status, 201) << r.body;
    EXPECT_EQ(body_of(r)["volume_meta"]["source"], "promptseg_service_path.nii.gz");
    std::filesystem::remove(path);
    EXPECT_EQ(s.create_session(json{{"path", path.string()}}.dump(), "application/json").status, 400);
}

TEST(Service, CorruptVolumeIsRejectedWithoutLeakingASession) {
    Fixture f;
    Service s(f.engine);
    const auto r = s.create_session("definitely not nifti", "application/octet-stream");
    EXPECT_EQ(r.status, 400);
    const json j = body_of(r);
    EXPECT_TRUE(j["error"]["code"].is_string());
    EXPECT_TRUE(j["error"]["message"].is_string());
    EXPECT_EQ(s.session_count(), 0u);
    EXPECT_EQ(s.create_session("", "application/octet-stream").status, 400);
    EXPECT_EQ(s.create_session("{", "application/json").status, 400);
}

TEST(Service, ClickDeltaContainsTheClickAndMatchesTheObject) {
    Fixture f;
    Service s(f.engine);
    const std::string id = create(s, f);
    const auto r = s.apply_click(id, click_json(20, 22, 20));
    ASSERT_EQ(r.status, 200) << r.body;
    const json j = body_of(r);
    EXPECT_EQ(j["encoding"], "rle-u32le");
    EXPECT_EQ(j["action_count"], 1);
    EXPECT_GE(j["elapsed_ms"].get<double>(), 0.0);
    const MaskDelta d = delta_from(j);
    EXPECT_EQ(d.changed, count_true(f.sphere));
    EXPECT_TRUE(d.bbox.contains({20, 22, 20}));
    Mask m(f.sphere.extent());
    apply_delta(m, d);
    EXPECT_EQ(m, f.sphere);
    EXPECT_EQ(decode_mask(s.export_mask(id).body), f.sphere);
}

TEST(Service, AccumulatedDeltasEqualTheExport) {
    Fixture f;
    Service s(f.engine);
    const std::string id = create(s, f);
    Mask client(f.sphere.extent());
    const std::vector<std::string> actions = {click_json(20, 22, 20), click_json(38, 10, 8, "negative"),
                                              "undo", click_json(14, 22, 20), click_json(40, 40, 36, "negative"),
                                              "undo", "reset", click_json(26, 22, 20)};
    for (const auto& a : actions) {
        ServiceResponse r;
        if (a == "undo") {
            r = s.undo(id);
        } else if (a == "reset") {
            r = s.reset(id);
        } else {
            r = s.apply_click(id, a);
        }
        ASSERT_EQ(r.status, 200) << a << ": " << r.body;
        apply_delta(client, delta_from(body_of(r)));
        ASSERT_EQ(client, decode_mask(s.export_mask(id).body)) << a;
    }
}

TEST(Service, UndoResetAndTranscript) {
    Fixture f;
    Service s(f.engine);
    const std::string id = create(s, f);
    ASSERT_EQ(s.apply_click(id, click_json(20, 22, 20)).status, 200);
    const auto u = s.undo(id);
    ASSERT_EQ(u.status, 200);
    EXPECT_EQ(body_of(u)["action_count"], 0);
    EXPECT_EQ(count_true(decode_mask(s.export_mask(id).body)), 0);
    const auto again = s.undo(id);
    EXPECT_EQ(again.status, 409);
    EXPECT_EQ(body_of(again)["error"]["code"], "nothing_to_undo");

    ASSERT_EQ(s.apply_click(id, click_json(20, 22, 20)).status, 200);
    ASSERT_EQ(s.apply_click(id, click_json(21, 22, 20, "negative")).status, 200);
    const auto rs = s.reset(id);
    EXPECT_EQ(body_of(rs)["action_count"], 0);
    EXPECT_EQ(count_true(decode_mask(s.export_mask(id).body)), 0);

    const auto t = s.transcript(id);
    ASSERT_EQ(t.status, 200);
    const auto entries = parse_transcript(t.body);
    ASSERT_EQ(entries.size(), 5u);
    EXPECT_EQ(entries[1].kind, TranscriptEntry::Kind::Undo);
    EXPECT_EQ(entries[4].kind, TranscriptEntry::Kind::Reset);
    EXPECT_EQ(entries[3].click.polarity, Polarity::Negative);
}

TEST(Service, TranscriptReplayReproducesTheExport) {
    Fixture f;
    Service s(f.engine);
    const std::string id = create(s, f);
    ASSERT_EQ(s.apply_click(id, click_json(20, 22, 20)).status, 200);
    ASSERT_EQ(s.apply_click(id, click_json(38, 10, 8)).status, 200);
    ASSERT_EQ(s.undo(id).status, 200);
    ASSERT_EQ(s.apply_click(id, click_json(25, 22, 20, "negative")).status, 200);
    const auto entries = parse_transcript(s.transcript(id).body);
    const WorkingImage image = prepare_working_image(nifti::decode(f.nii));
    Session session = f.engine.new_session(image.working);
    const Mask replayed = replay_transcript(f.engine, session, image, entries);
    EXPECT_EQ(image.export_mask(replayed), s.export_mask(id).body);
}

TEST(Service, ErrorStatuses) {
    Fixture f;
    ServiceOptions o;
    o.max_sessions = 2;
    Service s(f.engine, o);
    const std::string id = create(s, f);
    EXPECT_EQ(s.apply_click("0123456789abcdef01234567", click_json(1, 1, 1)).status, 404);
    EXPECT_EQ(s.apply_click(id, click_json(48, 0, 0)).status, 400);
    EXPECT_EQ(s.apply_click(id, click_json(-1, 0, 0)).status, 400);
    EXPECT_EQ(s.apply_click(id, "{\"x\": 1,").status, 400);
    EXPECT_EQ(s.apply_click(id, R"({"x": 1, "y": 2})").status, 400);
    EXPECT_EQ(s.apply_click(id, R"({"x": 1.5, "y": 2, "z": 3})").status, 400);
    EXPECT_EQ(s.apply_click(id, R"({"x": 1, "y": 2, "z": 3, "polarity": "maybe"})").status, 400);
    EXPECT_EQ(body_of(s.undo(id))["error"]["code"], "nothing_to_undo");

    create(s, f);
    const auto busy = s.create_session(f.nii, "application/octet-stream");
    EXPECT_EQ(busy.status, 503);
    EXPECT_EQ(body_of(busy)["error"]["code"], "busy");

    EXPECT_EQ(s.delete_session(id).status, 200);
    EXPECT_EQ(s.delete_session(id).status, 404);
    EXPECT_EQ(s.export_mask(id).status, 404);
    EXPECT_EQ(s.create_session(f.nii, "application/octet-stream").status, 201);
}

TEST(Service, IdleSessionsExpire) {
    Fixture f;
    ServiceOptions o;
    o.session_ttl = std::chrono::seconds(10);
    Service s(f.engine, o);
    auto now = Service::Clock::now();
    s.set_clock([&now] { return now; });
    const std::string a = create(s, f);
    const std::string b = create(s, f);
    now += std::chrono::seconds(8);
    ASSERT_EQ(s.apply_click(a, click_json(20, 22, 20)).status, 200);
    now += std::chrono::seconds(5);
    EXPECT_EQ(s.session_count(), 1u);
    EXPECT_EQ(s.export_mask(b).status, 404);
    EXPECT_EQ(s.export_mask(a).status, 200);
    now += std::chrono::seconds(11);
    EXPECT_EQ(s.export_mask(a).status, 404);
    EXPECT_EQ(s.session_count(), 0u);
}

TEST(Service, SlicePngShapes) {
    Fixture f;
    Service s(f.engine);
    const std::string id = create(s, f);
    ASSERT_EQ(s.apply_click(id, click_json(20, 22, 20)).status, 200);
    auto png_size = [](const std::string& png) {
        auto be32 = [&](std::size_t off) {
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(png[off + i]);
            return static_cast<int>(v);
        };
        return std::pair{be32(16), be32(20)};
    };
    const auto axial = s.slice(id, "axial", "20");
    ASSERT_EQ(axial.status, 200);
    EXPECT_EQ(axial.content_type, "image/png");
    EXPECT_EQ(png_size(axial.body), (std::pair{48, 44}));
    EXPECT_EQ(png_size(s.slice(id, "coronal", "3").body), (std::pair{48, 40}));
    EXPECT_EQ(png_size(s.slice(id, "x", "47").body), (std::pair{44, 40}));
    EXPECT_EQ(s.slice(id, "oblique", "3").status, 400);
    EXPECT_EQ(s.slice(id, "axial", "40").status, 400);
    EXPECT_EQ(s.slice(id, "axial", "ten").status, 400);
    EXPECT_EQ(s.slice(id, "axial", "5", {{"opacity", "2"}}).status, 400);
    EXPECT_EQ(s.slice(id, "axial", "5", {{"window_lo", "100"}, {"window_hi", "0"}}).status, 400);
    // The overlay shows up as a change in pixels through the object.
    EXPECT_NE(s.slice(id, "axial", "20").body, s.slice(id, "axial", "20", {{"opacity", "0"}}).body);
    EXPECT_EQ(s.slice(id, "axial", "0").body, s.slice(id, "axial", "0", {{"opacity", "0"}}).body);
}

TEST(Service, ConcurrentSessionsMatchSerialRuns) {
    Fixture f;
    const std::vector<std::vector<std::string>> scripts = {
        {click_json(20, 22, 20), click_json(38, 10, 8), click_json(22, 22, 20, "negative")},
        {click_json(38, 10, 8), click_json(30, 30, 30, "negative"), click_json(18, 22, 20)},
    };
    auto run = [&](Service& s, const std::string& id, const std::vector<std::string>& script) {
        for (const auto& c : script) ASSERT_EQ(s.apply_click(id, c).status, 200);
    };

    Service serial(f.engine);
    std::vector<std::string> expected;
    for (const auto& script : scripts) {
        const std::string id = create(serial, f);
        run(serial, id, script);
        expected.push_back(serial.export_mask(id).body);
    }

    Service shared(f.engine);
    std::vector<std::string> ids = {create(shared, f), create(shared, f)};
    for (int round = 0; round < 3; ++round) {
        std::vector<std::thread> threads;
        for (std::size_t k = 0; k < scripts.size(); ++k) {
            threads.emplace_back([&, k] { run(shared, ids[k], scripts[k]); });
        }
        for (auto& t : threads) t.join();
        for (std::size_t k = 0; k < scripts.size(); ++k) {
            ASSERT_EQ(shared.export_mask(ids[k]).body, expected[k]);
            ASSERT_EQ(shared.reset(ids[k]).status, 200);
        }
    }
}

TEST(Service, HttpRoundTrip) {
    Fixture f;
    Service s(f.engine);
    httplib::Server server;
    s.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/healthz");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(json::parse(health->body)["status"], "ok");

    auto created = client.Post("/sessions?name=upload.nii", f.nii, "application/octet-stream");
    ASSERT_TRUE(created);
    ASSERT_EQ(created->status, 201);
    const json handle = json::parse(created->body);
    EXPECT_EQ(handle["volume_meta"]["source"], "upload.nii");
    const std::string base = "/sessions/" + handle["id"].get<std::string>();

    auto click = client.Post(base + "/clicks", click_json(20, 22, 20), "application/json");
    ASSERT_TRUE(click);
    ASSERT_EQ(click->status, 200);
    Mask client_mask(f.sphere.extent());
    apply_delta(client_mask, delta_from(json::parse(click->body)));
    EXPECT_EQ(client_mask, f.sphere);

    auto mask = client.Get(base + "/mask");
    ASSERT_TRUE(mask);
    EXPECT_EQ(mask->status, 200);
    EXPECT_EQ(decode_mask(mask->body), f.sphere);

    auto slice = client.Get(base + "/slice?axis=axial&index=20");
    ASSERT_TRUE(slice);
    EXPECT_EQ(slice->status, 200);
    EXPECT_EQ(slice->get_header_value("Content-Type"), "image/png");

    auto transcript = client.Get(base + "/transcript");
    ASSERT_TRUE(transcript);
    EXPECT_EQ(parse_transcript(transcript->body).size(), 1u);

    auto undo = client.Post(base + "/undo", "", "application/json");
    ASSERT_TRUE(undo);
    EXPECT_EQ(undo->status, 200);
    auto reset = client.Post(base + "/reset", "", "application/json");
    ASSERT_TRUE(reset);
    EXPECT_EQ(reset->status, 200);

    auto bad = client.Post(base + "/clicks", "nope", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    EXPECT_EQ(json::parse(bad->body)["error"]["code"], "parse_error");

    auto del = client.Delete(base);
    ASSERT_TRUE(del);
    EXPECT_EQ(del->status, 200);
    auto gone = client.Get(base + "/mask");
    ASSERT_TRUE(gone);
    EXPECT_EQ(gone->status, 404);

    server.stop();
    listener.join();
}

TEST(Service, OptionsFromEnvironment) {
    ::setenv("PROMPTSEG_SESSION_TTL", "42", 1);
    ::setenv("PROMPTSEG_MAX_SESSIONS", "3", 1);
    const ServiceOptions o = service_options_from_env();
    EXPECT_EQ(o.session_ttl, std::chrono::seconds(42));
    EXPECT_EQ(o.max_sessions, 3u);
    ::setenv("PROMPTSEG_MAX_SESSIONS", "0", 1);
    EXPECT_THROW(service_options_from_env(), Error);
    ::setenv("PROMPTSEG_MAX_SESSIONS", "many", 1);
    EXPECT_THROW(service_options_from_env(), Error);
    ::unsetenv("PROMPTSEG_SESSION_TTL");
    ::unsetenv("PROMPTSEG_MAX_SESSIONS");
    const ServiceOptions d = service_options_from_env();
    EXPECT_EQ(d.max_sessions, ServiceOptions{}.max_sessions);
    EXPECT_EQ(d.session_ttl, ServiceOptions{}.session_ttl);
}

TEST(Service, ErrorStatusTable) {
    EXPECT_EQ(http_status(ErrorCode::InvalidInput), 400);
    EXPECT_EQ(http_status(ErrorCode::Parse), 400);
    EXPECT_EQ(http_status(ErrorCode::NotFound), 404);
    EXPECT_EQ(http_status(ErrorCode::NothingToUndo), 409);
    EXPECT_EQ(http_status(ErrorCode::Busy), 503);
    const auto r = error_response(ErrorCode::NotFound, "gone");
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(json::parse(r.body), (json{{"error", {{"code", "not_found"}, {"message", "gone"}}}}));
}
