// Command line front end: phantom generation, training, offline inference, evaluation and
// the HTTP service.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "promptseg/evaluate.hpp"
#include "promptseg/phantom.hpp"
#include "promptseg/service.hpp"
#include "promptseg/torch_backend.hpp"
#include "promptseg/train.hpp"

namespace fs = std::filesystem;
using namespace promptseg;

namespace {

std::vector<int> parse_budgets(const std::string& s) {
    std::vector<int> out;
    for (const auto& tok : split_tokens(s)) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw Error(ErrorCode::Parse, "budgets must be integers, got '" + tok + "'");
        }
    }
    if (out.empty()) throw Error(ErrorCode::Parse, "no click budgets given");
    return out;
}

MergeMode parse_merge(const std::string& s) {
    if (s == "mean") return MergeMode::Mean;
    if (s == "latest") return MergeMode::Latest;
    throw Error(ErrorCode::Parse, "merge mode must be mean or latest");
}

struct EngineFlags {
    std::string merge = "mean";
    double threshold = 0.5;
    int max_ring = 1;

    void add(CLI::App* app) {
        app->add_option("--merge", merge, "overlap merging: mean or latest")->capture_default_str();
        app->add_option("--peak-threshold", threshold, "cross-patch peak threshold")->capture_default_str();
        app->add_option("--max-ring", max_ring, "cross-patch propagation rings")->capture_default_str();
    }
    EngineOptions options() const {
        EngineOptions o;
        o.merge = parse_merge(merge);
        o.policy.peak_threshold = threshold;
        o.policy.max_ring = max_ring;
        return o;
    }
};

PreprocessOptions preprocess_from(const ModelBundle& b) {
    PreprocessOptions p;
    p.target_spacing_mm = b.metadata.get_double("target_spacing_mm", p.target_spacing_mm);
    p.clip_lo_hu = b.metadata.get_double("clip_lo_hu", p.clip_lo_hu);
    p.clip_hi_hu = b.metadata.get_double("clip_hi_hu", p.clip_hi_hu);
    return p;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"promptseg: click-prompted volumetric segmentation"};
    app.require_subcommand(1);

    // phantom ---------------------------------------------------------------------------
    auto* phantom = app.add_subcommand("phantom", "synthetic labelled volumes");
    phantom->require_subcommand(1);
    std::string spec_path, phantom_out, family = "random";
    std::uint64_t phantom_seed = 0;
    int count = 1, patch_side = 32;
    auto* gen = phantom->add_subcommand("generate", "rasterize one phantom description");
    gen->add_option("--spec", spec_path, "phantom description file")->required();
    gen->add_option("--seed", phantom_seed, "noise seed")->required();
    gen->add_option("--out", phantom_out, "output case directory")->required();
    auto* dataset = phantom->add_subcommand("dataset", "write a directory of random phantoms");
    dataset->add_option("--count", count, "number of cases")->required();
    dataset->add_option("--seed", phantom_seed, "dataset seed")->required();
    dataset->add_option("--out", phantom_out, "output dataset directory")->required();
    dataset->add_option("--family", family, "random or tube")->capture_default_str();
    dataset->add_option("--patch", patch_side, "patch side used to size tube phantoms")->capture_default_str();

    // train -----------------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train the segmentation and cross-patch networks");
    std::string config_path, data_dir, out_dir, prompt_encoder;
    std::uint64_t seed = 0;
    bool no_cpp = false;
    train->add_option("--config", config_path, "key-value training config")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "checkpoint directory")->required();
    train->add_option("--seed", seed, "run seed")->required();
    train->add_flag("--no-cpp", no_cpp, "train without the cross-patch branch");
    train->add_option("--prompt-encoder", prompt_encoder, "psap or rff");

    // infer -----------------------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "replay clicks on a volume and export the mask");
    std::string ckpt, volume_path, clicks_path, out_path;
    bool use_cpp = false;
    EngineFlags engine_flags;
    infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
    infer->add_option("--volume", volume_path, "input NIfTI volume")->required();
    infer->add_option("--clicks", clicks_path, "click transcript: `x y z polarity [cpp]`, undo, reset")->required();
    infer->add_flag("--cpp", use_cpp, "propagate every click to neighbouring patches");
    infer->add_option("--out", out_path, "output mask (.nii or .nii.gz)")->required();
    engine_flags.add(infer);

    // eval ------------------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "simulated interactive evaluation");
    std::string budgets = "1,3,5,7,9", report_path, selection = "class";
    double tolerance = kDefaultNsdToleranceMm;
    std::vector<int> eval_labels;
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--budgets", budgets, "comma-separated click budgets")->capture_default_str();
    eval->add_option("--seed", seed, "evaluation seed")->required();
    eval->add_option("--out", report_path, "report path (JSON; a .txt table is written alongside)")->required();
    eval->add_flag("--cpp", use_cpp, "use cross-patch propagation on every click");
    eval->add_option("--nsd-tolerance", tolerance, "NSD tolerance in mm")->capture_default_str();
    eval->add_option("--labels", eval_labels, "labels to evaluate (default: all present)");
    eval->add_option("--selection", selection, "refinement error selection: class or component")
        ->capture_default_str();
    engine_flags.add(eval);

    // serve -----------------------------------------------------------------------------
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    int port = 0;
    std::string host = "0.0.0.0";
    serve->add_option("--ckpt", ckpt, "checkpoint file (default $PROMPTSEG_CKPT)");
    serve->add_option("--port", port, "port (default $PROMPTSEG_PORT or 8080)");
    serve->add_option("--host", host, "bind address")->capture_default_str();
    engine_flags.add(serve);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const PhantomSpec spec = parse_phantom_spec(nifti::read_file(spec_path));
            auto [image, labels] = make_phantom(spec, phantom_seed);
            write_case(phantom_out, image, labels);
            std::ofstream(fs::path(phantom_out) / "spec.txt") << format_phantom_spec(spec);
            std::cout << "wrote " << phantom_out << "\n";
        } else if (dataset->parsed()) {
            PhantomFamily f;
            if (family == "random") {
                f = PhantomFamily::Random;
            } else if (family == "tube") {
                f = PhantomFamily::Tube;
            } else {
                throw Error(ErrorCode::Parse, "family must be random or tube");
            }
            write_phantom_dataset(phantom_out, count, phantom_seed, f, patch_side);
            std::cout << "wrote " << count << " cases to " << phantom_out << "\n";
        } else if (train->parsed()) {
            const KeyValueConfig kv = KeyValueConfig::load(config_path);
            NetworkConfig net = NetworkConfig::from_kv(kv);
            TrainConfig cfg = TrainConfig::from_kv(kv);
            if (no_cpp) cfg.use_cpp = false;
            if (!prompt_encoder.empty()) net.prompt_encoder = parse_prompt_encoder(prompt_encoder);
            const auto data = load_dataset(data_dir, cfg.preprocess);
            std::cerr << "training on " << data.size() << " cases\n";
            train_to_directory(net, cfg, seed, data, out_dir, &std::cerr);
            std::cout << "wrote " << (fs::path(out_dir) / "checkpoint.pt").string() << "\n";
        } else if (infer->parsed()) {
            LoadedEngine loaded(load_checkpoint(ckpt), engine_flags.options());
            if (use_cpp && !loaded.cpp) throw Error(ErrorCode::InvalidInput, "checkpoint has no cross-patch network");
            const WorkingImage image = prepare_working_image(nifti::read(volume_path), preprocess_from(loaded.bundle));
            auto entries = parse_transcript(nifti::read_file(clicks_path));
            if (use_cpp) {
                for (auto& e : entries) e.cpp = true;
            }
            Session session = loaded.engine.new_session(image.working);
            const Mask mask = replay_transcript(loaded.engine, session, image, entries);
            nifti::write_nii_bytes(out_path, image.export_mask(mask));
            std::cout << "wrote " << out_path << " (" << count_true(image.to_source(mask)) << " voxels)\n";
        } else if (eval->parsed()) {
            LoadedEngine loaded(load_checkpoint(ckpt), engine_flags.options());
            if (use_cpp && !loaded.cpp) throw Error(ErrorCode::InvalidInput, "checkpoint has no cross-patch network");
            const auto data = load_dataset(data_dir, preprocess_from(loaded.bundle));
            EvaluationOptions o;
            o.budgets = parse_budgets(budgets);
            o.seed = seed;
            o.use_cpp = use_cpp;
            o.nsd_tolerance_mm = tolerance;
            o.dataset_id = fs::path(data_dir).filename().string();
            o.labels = eval_labels;
            if (selection == "component") {
                o.selection = ErrorSelection::ByComponent;
            } else if (selection != "class") {
                throw Error(ErrorCode::Parse, "selection must be class or component");
            }
            const MetricsReport report = evaluate_interactive(loaded.engine, data, o);
            fs::path json_path(report_path);
            if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
            nifti::write_file(json_path, report.to_json());
            fs::path table_path = json_path;
            table_path.replace_extension(".txt");
            if (table_path == json_path) table_path += ".txt";
            nifti::write_file(table_path, report.to_table());
            std::cout << report.to_table();
        } else if (serve->parsed()) {
            if (ckpt.empty()) {
                const char* env = std::getenv("PROMPTSEG_CKPT");
                if (!env) throw Error(ErrorCode::InvalidInput, "no checkpoint: pass --ckpt or set PROMPTSEG_CKPT");
                ckpt = env;
            }
            if (port == 0) {
                const char* env = std::getenv("PROMPTSEG_PORT");
                port = env ? std::atoi(env) : 8080;
            }
            auto bundle = load_checkpoint(ckpt);
            ServiceOptions so;
            so.preprocess = preprocess_from(bundle);
            so = service_options_from_env(so);
            LoadedEngine loaded(std::move(bundle), engine_flags.options());
            Service service(loaded.engine, so);
            httplib::Server server;
            service.mount(server);
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!server.listen(host, port)) throw Error(ErrorCode::Io, "cannot listen on port " + std::to_string(port));
        }
    } catch (const Error& e) {
        std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
