#include "promptseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace promptseg {

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string_view step_mode_name(StepMode m) {
    return m == StepMode::PerIteration ? "per_iteration" : "accumulate";
}

StepMode parse_step_mode(const std::string& s) {
    if (s == "per_iteration") return StepMode::PerIteration;
    if (s == "accumulate") return StepMode::Accumulate;
    throw Error(ErrorCode::Parse, "unknown step_mode '" + s + "' (per_iteration|accumulate)");
}

std::string_view selection_name(ErrorSelection s) {
    return s == ErrorSelection::ByClass ? "class" : "component";
}

ErrorSelection parse_selection(const std::string& s) {
    if (s == "class") return ErrorSelection::ByClass;
    if (s == "component") return ErrorSelection::ByComponent;
    throw Error(ErrorCode::Parse, "unknown error_selection '" + s + "' (class|component)");
}

Mask threshold(const torch::Tensor& probs) {
    const Grid<float> g = to_grid(probs);
    Mask m(g.extent());
    for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i] > 0.5f ? 1 : 0;
    return m;
}

torch::Tensor per_sample_mean(const torch::Tensor& x) {
    return x.flatten(1).mean(1);
}

}  // namespace

TrainConfig TrainConfig::paper() { return {}; }

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.lr = 1e-3;
    c.warmup_epochs = 5;
    c.total_epochs = 60;
    c.decay_epoch = 45;
    c.iterations_per_sample = 3;
    c.samples_per_volume = 1;
    c.batch_size = 4;
    return c;
}

void TrainConfig::validate() const {
    if (std::abs(focal_coeff + dice_coeff - 1.0) > 1e-12) {
        throw Error(ErrorCode::InvalidInput, "focal_coeff + dice_coeff must equal 1");
    }
    if (iterations_per_sample < 1) throw Error(ErrorCode::InvalidInput, "iterations_per_sample must be >= 1");
    if (!(warmup_epochs < decay_epoch && decay_epoch <= total_epochs) || warmup_epochs < 0) {
        throw Error(ErrorCode::InvalidInput, "need 0 <= warmup_epochs < decay_epoch <= total_epochs");
    }
    if (!(lr > 0) || samples_per_volume < 1 || batch_size < 1) {
        throw Error(ErrorCode::InvalidInput, "lr, samples_per_volume and batch_size must be positive");
    }
}

KeyValueConfig TrainConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set("lr", format_double(lr));
    kv.set("warmup_epochs", std::to_string(warmup_epochs));
    kv.set("total_epochs", std::to_string(total_epochs));
    kv.set("decay_epoch", std::to_string(decay_epoch));
    kv.set("iterations_per_sample", std::to_string(iterations_per_sample));
    kv.set("focal_coeff", format_double(focal_coeff));
    kv.set("dice_coeff", format_double(dice_coeff));
    kv.set("focal_gamma", format_double(focal_gamma));
    kv.set("dice_smooth", format_double(dice_smooth));
    kv.set("beta1", format_double(beta1));
    kv.set("beta2", format_double(beta2));
    kv.set("weight_decay", format_double(weight_decay));
    kv.set("samples_per_volume", std::to_string(samples_per_volume));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("step_mode", std::string(step_mode_name(step_mode)));
    kv.set("error_selection", std::string(selection_name(error_selection)));
    kv.set("use_cpp", use_cpp ? "true" : "false");
    kv.set("checkpoint_every", std::to_string(checkpoint_every));
    kv.set("target_spacing_mm", format_double(preprocess.target_spacing_mm));
    kv.set("clip_lo_hu", format_double(preprocess.clip_lo_hu));
    kv.set("clip_hi_hu", format_double(preprocess.clip_hi_hu));
    return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
    const std::string preset = kv.get_or("preset", "paper");
    TrainConfig c;
    if (preset == "desk") {
        c = desk();
    } else if (preset != "paper") {
        throw Error(ErrorCode::Parse, "unknown preset '" + preset + "' (paper|desk)");
    }
    c.lr = kv.get_double("lr", c.lr);
    c.warmup_epochs = static_cast<int>(kv.get_int("warmup_epochs", c.warmup_epochs));
    c.total_epochs = static_cast<int>(kv.get_int("total_epochs", c.total_epochs));
    c.decay_epoch = static_cast<int>(kv.get_int("decay_epoch", c.decay_epoch));
    c.iterations_per_sample = static_cast<int>(kv.get_int("iterations_per_sample", c.iterations_per_sample));
    c.focal_coeff = kv.get_double("focal_coeff", c.focal_coeff);
    c.dice_coeff = kv.get_double("dice_coeff", c.dice_coeff);
    c.focal_gamma = kv.get_double("focal_gamma", c.focal_gamma);
    c.dice_smooth = kv.get_double("dice_smooth", c.dice_smooth);
    c.beta1 = kv.get_double("beta1", c.beta1);
    c.beta2 = kv.get_double("beta2", c.beta2);
    c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
    c.samples_per_volume = static_cast<int>(kv.get_int("samples_per_volume", c.samples_per_volume));
    c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
    if (kv.has("step_mode")) c.step_mode = parse_step_mode(kv.get("step_mode"));
    if (kv.has("error_selection")) c.error_selection = parse_selection(kv.get("error_selection"));
    c.use_cpp = kv.get_bool("use_cpp", c.use_cpp);
    c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
    c.preprocess.target_spacing_mm = kv.get_double("target_spacing_mm", c.preprocess.target_spacing_mm);
    c.preprocess.clip_lo_hu = kv.get_double("clip_lo_hu", c.preprocess.clip_lo_hu);
    c.preprocess.clip_hi_hu = kv.get_double("clip_hi_hu", c.preprocess.clip_hi_hu);
    c.validate();
    return c;
}

// --- losses ------------------------------------------------------------------------------

torch::Tensor focal_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& gt, double gamma) {
    // log p_t and 1 - p_t from log-sigmoids, stable for large |logit|
    auto log_p = torch::log_sigmoid(logits);
    auto log_q = torch::log_sigmoid(-logits);
    auto log_pt = gt * log_p + (1 - gt) * log_q;
    auto one_minus_pt = gt * torch::sigmoid(-logits) + (1 - gt) * torch::sigmoid(logits);
    return per_sample_mean(-torch::pow(one_minus_pt, gamma) * log_pt);
}

torch::Tensor soft_dice_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& gt, double smooth) {
    auto p = torch::sigmoid(logits).flatten(1);
    auto g = gt.flatten(1);
    auto inter = (p * g).sum(1);
    return 1 - (2 * inter + smooth) / (p.sum(1) + g.sum(1) + smooth);
}

torch::Tensor seg_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& gt, const TrainConfig& cfg) {
    if (logits.sizes() != gt.sizes()) {
        throw Error(ErrorCode::ShapeMismatch, "seg_loss: logits and ground truth shapes differ");
    }
    if (!torch::isfinite(logits).all().item<bool>()) {
        throw Error(ErrorCode::TrainingDivergence, "seg_loss: non-finite logits");
    }
    auto g = gt.to(logits.scalar_type());
    return cfg.focal_coeff * focal_loss_per_sample(logits, g, cfg.focal_gamma) +
           cfg.dice_coeff * soft_dice_loss_per_sample(logits, g, cfg.dice_smooth);
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& gt, const TrainConfig& cfg) {
    return seg_loss_per_sample(logits, gt, cfg).mean();
}

torch::Tensor cpp_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.sizes() != gt.sizes()) {
        throw Error(ErrorCode::ShapeMismatch, "cpp_loss: heatmap shapes differ");
    }
    return (pred - gt).pow(2).mean();
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.total_epochs) {
        throw Error(ErrorCode::InvalidInput, "epoch outside the training schedule");
    }
    if (epoch < cfg.warmup_epochs) return cfg.lr * (epoch + 1) / cfg.warmup_epochs;
    if (epoch < cfg.decay_epoch) return cfg.lr;
    return cfg.lr / 10.0;
}

// --- training loop -------------------------------------------------------------------------

PairSample prepare_pair(const Case& c, const PatchPair& pair, std::uint64_t click_seed) {
    PairSample s;
    s.pair = pair;
    s.u_img = crop(c.image.data, pair.u, 0.0f);
    s.v_img = crop(c.image.data, pair.v, 0.0f);
    const Mask full = label_mask(c.labels.labels, pair.label_id);
    s.u_gt = crop(full, pair.u, std::uint8_t{0});
    s.v_gt = crop(full, pair.v, std::uint8_t{0});
    s.click_seed = click_seed;
    return s;
}

Trainer::Trainer(const NetworkConfig& net, const TrainConfig& cfg, std::uint64_t seed)
    : net_(net), cfg_(cfg), seed_(seed) {
    net_.validate();
    cfg_.validate();
    seg_ = make_seg_model(net_, mix_seed(seed, 1));
    seg_->train();
    const auto opts = torch::optim::AdamWOptions(cfg_.lr)
                          .betas({cfg_.beta1, cfg_.beta2})
                          .weight_decay(cfg_.weight_decay);
    seg_opt_ = std::make_unique<torch::optim::AdamW>(seg_->parameters(), opts);
    if (cfg_.use_cpp) {
        cpp_ = make_cpp_model(net_, mix_seed(seed, 2));
        cpp_->train();
        cpp_opt_ = std::make_unique<torch::optim::AdamW>(cpp_->parameters(), opts);
    }
}

void Trainer::set_lr(double lr) {
    for (auto* opt : {seg_opt_.get(), cpp_opt_.get()}) {
        if (!opt) continue;
        for (auto& group : opt->param_groups()) {
            static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
        }
    }
}

StepReport Trainer::train_step(const std::vector<PairSample>& batch) {
    if (batch.empty()) throw Error(ErrorCode::InvalidInput, "train_step needs at least one pair");
    const auto b = static_cast<int64_t>(batch.size());
    const Extent3 ps = net_.patch_size;
    const double sigma = net_.prompt_sigma_vox;

    // Patch order: U of every pair, then V of every pair.
    std::vector<const Mask*> gts;
    std::vector<torch::Tensor> img_parts, gt_parts;
    for (const auto& s : batch) {
        if (!(s.u_img.extent() == ps) || !(s.v_img.extent() == ps)) {
            throw Error(ErrorCode::ShapeMismatch, "training crops do not match the patch size");
        }
        img_parts.push_back(to_tensor(s.u_img));
        gt_parts.push_back(to_tensor(s.u_gt));
        gts.push_back(&s.u_gt);
    }
    for (const auto& s : batch) {
        img_parts.push_back(to_tensor(s.v_img));
        gt_parts.push_back(to_tensor(s.v_gt));
        gts.push_back(&s.v_gt);
    }
    const auto img = torch::cat(img_parts);
    const auto gt = torch::cat(gt_parts);
    const auto n_patches = static_cast<std::size_t>(2 * b);

    torch::Tensor heat_target;
    if (cpp_) {
        // P(U, U_p, V) is scored against V's centroid map, P(V, V_p, U) against U's.
        std::vector<torch::Tensor> parts;
        for (const auto& s : batch) parts.push_back(to_tensor(make_centroid_heatmap(s.v_gt, sigma)));
        for (const auto& s : batch) parts.push_back(to_tensor(make_centroid_heatmap(s.u_gt, sigma)));
        heat_target = torch::cat(parts);
    }

    std::vector<std::vector<Click>> clicks(n_patches);
    for (std::size_t i = 0; i < n_patches; ++i) {
        const auto& pair = batch[i % static_cast<std::size_t>(b)];
        if (count_true(*gts[i]) > 0) clicks[i].push_back(first_click(*gts[i], mix_seed(pair.click_seed, i / b)));
    }
    std::vector<Grid<float>> y(n_patches, Grid<float>(ps));

    auto prompt_batch = [&]() {
        std::vector<torch::Tensor> maps;
        maps.reserve(n_patches);
        for (std::size_t i = 0; i < n_patches; ++i) {
            PromptMaps m = render_clicks(clicks[i], ps, sigma);
            m.y_map = y[i];
            maps.push_back(to_tensor(m));
        }
        return PromptBatch{torch::cat(maps), clicks};
    };

    const int n_iter = cfg_.iterations_per_sample;
    const bool per_iteration = cfg_.step_mode == StepMode::PerIteration;
    StepReport report;
    seg_->train();
    if (cpp_) cpp_->train();

    for (int it = 0; it < n_iter; ++it) {
        if (per_iteration || it == 0) {
            seg_opt_->zero_grad();
            if (cpp_opt_) cpp_opt_->zero_grad();
        }
        const PromptBatch prompts = prompt_batch();
        auto logits = seg_->forward(img, prompts);
        auto per = seg_loss_per_sample(logits, gt, cfg_);
        auto local = (per.slice(0, 0, b) + per.slice(0, b, 2 * b)).mean();

        torch::Tensor cross = torch::zeros({}, local.options());
        if (cpp_) {
            auto probs = torch::sigmoid(logits).detach();
            auto u = img.slice(0, 0, b), v = img.slice(0, b, 2 * b);
            auto up = probs.slice(0, 0, b), vp = probs.slice(0, b, 2 * b);
            auto pred = cpp_->forward(torch::cat({u, v}), torch::cat({up, vp}), torch::cat({v, u}));
            auto mse = per_sample_mean((pred - heat_target).pow(2));
            cross = (mse.slice(0, 0, b) + mse.slice(0, b, 2 * b)).mean();
        }
        auto total = local.to(torch::kDouble) + cross.to(torch::kDouble);

        StepLosses losses{local.item<double>(), cross.item<double>(), total.item<double>()};
        if (!std::isfinite(losses.total)) {
            std::ostringstream os;
            os << "non-finite training loss at inner iteration " << it + 1 << " (local=" << losses.local
               << ", cross=" << losses.cross << ", pairs=" << b << ", first anchor=("
               << batch[0].pair.anchor.x << "," << batch[0].pair.anchor.y << "," << batch[0].pair.anchor.z
               << "), label=" << batch[0].pair.label_id << ")";
            throw Error(ErrorCode::TrainingDivergence, os.str());
        }
        total.backward();
        if (per_iteration || it == n_iter - 1) {
            seg_opt_->step();
            if (cpp_opt_) cpp_opt_->step();
        }
        report.iterations.push_back(losses);

        if (it == n_iter - 1) break;
        torch::Tensor probs;
        if (per_iteration) {
            torch::NoGradGuard guard;
            probs = torch::sigmoid(seg_->forward(img, prompts));
        } else {
            probs = torch::sigmoid(logits).detach();
        }
        for (std::size_t i = 0; i < n_patches; ++i) {
            const auto pi = probs[static_cast<int64_t>(i)];
            y[i] = to_grid(pi);
            if (auto c = next_click(*gts[i], threshold(pi), cfg_.error_selection)) clicks[i].push_back(*c);
        }
    }

    for (const auto& l : report.iterations) {
        report.mean.local += l.local / n_iter;
        report.mean.cross += l.cross / n_iter;
        report.mean.total += l.total / n_iter;
    }
    for (int64_t i = 0; i < b; ++i) {
        report.u_clicks.push_back(clicks[static_cast<std::size_t>(i)].size());
        report.v_clicks.push_back(clicks[static_cast<std::size_t>(i + b)].size());
    }
    return report;
}

EpochReport Trainer::train_epoch(const std::vector<Case>& data, int epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::pair<std::size_t, int>> order;
    for (std::size_t ci = 0; ci < data.size(); ++ci) {
        if (data[ci].label_ids.empty()) continue;
        for (int si = 0; si < cfg_.samples_per_volume; ++si) order.emplace_back(ci, si);
    }
    if (order.empty()) throw Error(ErrorCode::NoForeground, "training data has no labelled voxels");
    const std::uint64_t epoch_seed = mix_seed(seed_, 1000 + static_cast<std::uint64_t>(epoch));
    std::mt19937_64 shuffle_rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochReport rep;
    rep.epoch = epoch;
    rep.lr = lr_schedule(epoch, cfg_);
    set_lr(rep.lr);

    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
        std::vector<PairSample> batch;
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
        for (std::size_t k = start; k < end; ++k) {
            const auto [ci, si] = order[k];
            const Case& c = data[ci];
            const std::uint64_t s = mix_seed(epoch_seed, ci * 1009 + static_cast<std::uint64_t>(si));
            const int label = c.label_ids[s % c.label_ids.size()];
            const PatchPair pair = sample_patch_pair(c.image, c.labels, label, mix_seed(s, 1), net_.patch_size);
            batch.push_back(prepare_pair(c, pair, mix_seed(s, 2)));
        }
        const StepReport r = train_step(batch);
        rep.mean.local += r.mean.local;
        rep.mean.cross += r.mean.cross;
        rep.mean.total += r.mean.total;
        rep.pairs += batch.size();
        ++steps;
    }
    rep.mean.local /= static_cast<double>(steps);
    rep.mean.cross /= static_cast<double>(steps);
    rep.mean.total /= static_cast<double>(steps);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

std::vector<EpochReport> Trainer::fit(const std::vector<Case>& data,
                                      const std::function<void(const EpochReport&)>& on_epoch) {
    std::vector<EpochReport> out;
    for (int e = 0; e < cfg_.total_epochs; ++e) {
        out.push_back(train_epoch(data, e));
        if (on_epoch) on_epoch(out.back());
    }
    return out;
}

ModelBundle Trainer::bundle() const {
    ModelBundle b;
    b.config = net_;
    b.seg = seg_;
    b.cpp = cpp_;
    b.metadata = cfg_.to_kv();
    b.metadata.set("seed", std::to_string(seed_));
    return b;
}

void train_to_directory(const NetworkConfig& net, const TrainConfig& cfg, std::uint64_t seed,
                        const std::vector<Case>& data, const std::filesystem::path& out_dir,
                        std::ostream* progress) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream cfg_out(out_dir / "config.txt");
        cfg_out << "# network\n" << net.to_kv().to_string() << "# training\n" << cfg.to_kv().to_string();
    }
    std::ofstream log(out_dir / "train_log.jsonl");
    if (!log) throw Error(ErrorCode::Io, "cannot write training log in " + out_dir.string());

    Trainer trainer(net, cfg, seed);
    trainer.fit(data, [&](const EpochReport& r) {
        nlohmann::json j{{"epoch", r.epoch},           {"lr", r.lr},
                         {"loss_local", r.mean.local}, {"loss_cross", r.mean.cross},
                         {"loss", r.mean.total},       {"pairs", r.pairs},
                         {"seconds", r.seconds}};
        log << j.dump() << '\n';
        log.flush();
        if (progress) *progress << j.dump() << std::endl;
        if (cfg.checkpoint_every > 0 && (r.epoch + 1) % cfg.checkpoint_every == 0) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_epoch_%04d.pt", r.epoch + 1);
            auto b = trainer.bundle();
            b.metadata.set("epochs_trained", std::to_string(r.epoch + 1));
            save_checkpoint(out_dir / name, b);
        }
    });
    auto b = trainer.bundle();
    b.metadata.set("epochs_trained", std::to_string(cfg.total_epochs));
    save_checkpoint(out_dir / "checkpoint.pt", b);
}

}  // namespace promptseg
