#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "promptseg/checkpoint.hpp"
#include "promptseg/clicksim.hpp"
#include "promptseg/dataset.hpp"
#include "promptseg/heatmap.hpp"
#include "promptseg/network.hpp"

namespace promptseg {

enum class StepMode {
    /// One optimizer step after every inner iteration.
    PerIteration,
    /// Gradients of all N inner iterations accumulated into a single step.
    Accumulate,
};

struct TrainConfig {
    double lr = 1e-4;
    int warmup_epochs = 100;
    int total_epochs = 1000;
    int decay_epoch = 800;
    int iterations_per_sample = 5;
    double focal_coeff = 0.2;
    double dice_coeff = 0.8;
    double focal_gamma = 2.0;
    double dice_smooth = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-2;
    int samples_per_volume = 8;
    int batch_size = 1;
    StepMode step_mode = StepMode::PerIteration;
    ErrorSelection error_selection = ErrorSelection::ByClass;
    bool use_cpp = true;
    int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
    PreprocessOptions preprocess;

    static TrainConfig paper();
    /// 60 epochs, warm-up 5, decay at 45; sized for CPU runs of the acceptance suite.
    static TrainConfig desk();

    void validate() const;
    KeyValueConfig to_kv() const;
    /// Starts from the preset named by `preset` (default paper) and applies overrides.
    static TrainConfig from_kv(const KeyValueConfig& kv);
};

/// Per-sample 0.2 * focal + 0.8 * soft dice on logits; [B] for [B, 1, D, H, W] inputs.
torch::Tensor seg_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& gt,
                                  const TrainConfig& cfg = {});
/// Mean of seg_loss_per_sample over the batch.
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& gt, const TrainConfig& cfg = {});
torch::Tensor focal_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& gt, double gamma);
torch::Tensor soft_dice_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& gt, double smooth);

/// Mean squared error over all voxels.
torch::Tensor cpp_loss(const torch::Tensor& pred, const torch::Tensor& gt);

/// Linear warm-up reaching lr at epoch `warmup_epochs`: lr * (epoch + 1) / warmup before
/// that, lr until `decay_epoch`, lr / 10 afterwards.
double lr_schedule(int epoch, const TrainConfig& cfg);

/// Training crops of one sampled window pair.
struct PairSample {
    PatchPair pair;
    Grid<float> u_img, v_img;
    Mask u_gt, v_gt;
    std::uint64_t click_seed = 0;
};

PairSample prepare_pair(const Case& c, const PatchPair& pair, std::uint64_t click_seed);

struct StepLosses {
    double local = 0;
    double cross = 0;
    double total = 0;
};

struct StepReport {
    std::vector<StepLosses> iterations;  // one entry per inner iteration
    StepLosses mean;
    std::vector<std::size_t> u_clicks;   // final click counts per pair
    std::vector<std::size_t> v_clicks;
};

struct EpochReport {
    int epoch = 0;
    double lr = 0;
    StepLosses mean;
    std::size_t pairs = 0;
    double seconds = 0;
};

class Trainer {
public:
    Trainer(const NetworkConfig& net, const TrainConfig& cfg, std::uint64_t seed);

    /// One N-iteration inner loop on a batch of window pairs.
    StepReport train_step(const std::vector<PairSample>& batch);

    /// Samples samples_per_volume pairs per case, shuffles, and runs train_step per batch.
    EpochReport train_epoch(const std::vector<Case>& data, int epoch);

    /// Full schedule; `on_epoch` sees every report (logging, checkpoints).
    std::vector<EpochReport> fit(const std::vector<Case>& data,
                                 const std::function<void(const EpochReport&)>& on_epoch = {});

    ModelBundle bundle() const;
    void set_lr(double lr);

    SegModel& seg() { return seg_; }
    CppModel& cpp() { return cpp_; }
    const TrainConfig& config() const { return cfg_; }
    const NetworkConfig& network() const { return net_; }

private:
    NetworkConfig net_;
    TrainConfig cfg_;
    std::uint64_t seed_;
    SegModel seg_{nullptr};
    CppModel cpp_{nullptr};
    std::unique_ptr<torch::optim::AdamW> seg_opt_;
    std::unique_ptr<torch::optim::AdamW> cpp_opt_;
};

/// Runs `fit` and writes <out>/checkpoint.pt, <out>/train_log.jsonl and <out>/config.txt.
void train_to_directory(const NetworkConfig& net, const TrainConfig& cfg, std::uint64_t seed,
                        const std::vector<Case>& data, const std::filesystem::path& out_dir,
                        std::ostream* progress = nullptr);

}  // namespace promptseg
