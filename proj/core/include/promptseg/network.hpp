#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "promptseg/kv_config.hpp"
#include "promptseg/prompts.hpp"

namespace promptseg {

enum class Variant { Paper, Desk };
enum class PromptEncoderKind { Psap, Rff };

std::string_view prompt_encoder_name(PromptEncoderKind k);
PromptEncoderKind parse_prompt_encoder(std::string_view s);

struct NetworkConfig {
    Variant variant = Variant::Paper;
    Extent3 patch_size = Extent3::cube(64);
    std::array<int, 4> stage_dims{96, 192, 384, 768};
    std::array<int, 4> stage_depths{1, 2, 6, 2};
    std::array<int, 4> stage_heads{1, 2, 4, 8};
    std::array<int, 4> sr_ratios{8, 4, 2, 1};
    int stem_channels = 48;
    int mlp_ratio = 4;
    int psap_hidden = 128;
    std::array<int, 2> head_channels{48, 24};
    int cpp_base_channels = 64;
    double prompt_sigma_vox = kDefaultPromptSigmaVox;
    PromptEncoderKind prompt_encoder = PromptEncoderKind::Psap;
    int rff_features = 64;
    double rff_scale = 1.0;
    std::uint64_t rff_seed = 17;

    /// Dims [96, 192, 384, 768], depths [1, 2, 6, 2], 64^3 patches.
    static NetworkConfig paper();
    /// Dims [16, 32, 64, 128], depths [1, 1, 2, 1], 32^3 patches.
    static NetworkConfig desk();

    void validate() const;
    KeyValueConfig to_kv() const;
    static NetworkConfig from_kv(const KeyValueConfig& kv);
};

/// Encoder down-scale factor of each stage relative to the input patch.
inline constexpr std::array<int, 4> kStageStrides{4, 8, 16, 32};

// --- building blocks -------------------------------------------------------------------

struct ConvNormActImpl : torch::nn::Module {
    ConvNormActImpl(int in, int out, int kernel = 3, int stride = 1);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv3d conv{nullptr};
    torch::nn::InstanceNorm3d norm{nullptr};
};
TORCH_MODULE(ConvNormAct);

/// Pixel attention: x * sigmoid(depthwise_conv(x)).
struct PixelAttentionImpl : torch::nn::Module {
    explicit PixelAttentionImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv3d conv{nullptr};
};
TORCH_MODULE(PixelAttention);

/// Stride-2 convolution, channel LayerNorm and pixel attention between encoder stages.
struct PatchEmbedImpl : torch::nn::Module {
    PatchEmbedImpl(int in, int out);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv3d conv{nullptr};
    torch::nn::LayerNorm norm{nullptr};
    PixelAttention pos{nullptr};
};
TORCH_MODULE(PatchEmbed);

/// Efficient multi-head self-attention with spatially reduced keys/values.
struct EfficientAttentionImpl : torch::nn::Module {
    EfficientAttentionImpl(int dim, int heads, int sr_ratio);
    /// x: [B, N, C] tokens of a (D, H, W) grid.
    torch::Tensor forward(const torch::Tensor& x, std::array<int64_t, 3> grid);

    int dim;
    int heads;
    int sr_ratio;
    double scale;
    torch::nn::Linear q{nullptr};
    torch::nn::Linear kv{nullptr};
    torch::nn::Linear proj{nullptr};
    torch::nn::Conv3d sr{nullptr};
    torch::nn::LayerNorm sr_norm{nullptr};
    torch::nn::Conv2d transform_conv{nullptr};
    torch::nn::InstanceNorm2d transform_norm{nullptr};
};
TORCH_MODULE(EfficientAttention);

struct TransformerBlockImpl : torch::nn::Module {
    TransformerBlockImpl(int dim, int heads, int sr_ratio, int mlp_ratio);
    torch::Tensor forward(const torch::Tensor& x, std::array<int64_t, 3> grid);

    torch::nn::LayerNorm norm1{nullptr};
    EfficientAttention attn{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// Prompt-conditioned instance normalization: gamma(M) * IN(x) + beta(M), with gamma and beta
/// produced by convolutions over the prompt map resized to x's grid. The gamma head starts
/// at exactly 1 and the beta head at 0.
struct PsapImpl : torch::nn::Module {
    PsapImpl(int channels, int hidden, int prompt_channels = 3);

    /// x: [B, C, d, h, w]; prompt: [B, 3, d, h, w] already resized to x.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& prompt);
    /// Resizes a full-resolution prompt map to x by average pooling, then modulates.
    torch::Tensor modulate(const torch::Tensor& x, const torch::Tensor& full_prompt);

    torch::Tensor gamma(const torch::Tensor& prompt);
    torch::Tensor beta(const torch::Tensor& prompt);

    /// Test hook: bypass both branches so the output is IN(x) exactly.
    bool identity_modulation = false;

    torch::nn::Conv3d shared{nullptr};
    torch::nn::Conv3d gamma_conv{nullptr};
    torch::nn::Conv3d beta_conv{nullptr};
};
TORCH_MODULE(Psap);

/// Average-pools a [B, C, D, H, W] map down to `like`'s spatial shape (integer factors).
torch::Tensor resize_prompt(const torch::Tensor& full, const torch::Tensor& like);

/// Per-channel, per-instance normalization without affine parameters.
torch::Tensor instance_norm(const torch::Tensor& x);

/// Random-Fourier-feature prompt encoder (the ablation baseline): clicks are encoded as
/// sinusoids of B v plus a learned polarity embedding, mean-pooled per sample, and projected to
/// each decoder stage's width.
struct RffPromptImpl : torch::nn::Module {
    RffPromptImpl(const NetworkConfig& cfg);

    /// [B, 2m] pooled encodings. Samples without clicks get zeros.
    torch::Tensor pooled(const std::vector<std::vector<Click>>& clicks, const Extent3& patch,
                         torch::Dtype dtype) const;
    /// [k, 2m] encodings of clicks normalized to [-1, 1]^3.
    torch::Tensor encode(const torch::Tensor& v, const torch::Tensor& negative) const;

    RFFEncoder to_encoder() const;

    int m;
    torch::Tensor b;      // [m, 3], fixed
    torch::Tensor e_pos;  // [2m]
    torch::Tensor e_neg;  // [2m]
    torch::nn::ModuleList stage_proj{nullptr};
};
TORCH_MODULE(RffPrompt);

/// Inputs of one forward pass of the segmentation network.
struct PromptBatch {
    torch::Tensor maps;                           // [B, 3, D, H, W] ordered P, N, Y
    std::vector<std::vector<Click>> clicks;       // patch-local clicks per sample (RFF path)
};

struct EncoderFeatures {
    std::array<torch::Tensor, 4> stages;  // strides 4, 8, 16, 32
};

/// Promptable segmentation network: conv stem, four attention stages, prompt-modulated
/// decoder with skip concatenation, and a single-channel logit head at input resolution.
struct SegModelImpl : torch::nn::Module {
    explicit SegModelImpl(const NetworkConfig& cfg);

    EncoderFeatures encode(const torch::Tensor& image);
    /// image: [B, 1, D, H, W] in [0, 1]; returns logits [B, 1, D, H, W].
    torch::Tensor forward(const torch::Tensor& image, const PromptBatch& prompts);

    NetworkConfig config;
    ConvNormAct stem1{nullptr};
    ConvNormAct stem2{nullptr};
    PixelAttention stem_pos{nullptr};
    torch::nn::ModuleList patch_embed{nullptr};      // stages 2..4
    std::array<torch::nn::ModuleList, 4> blocks;
    torch::nn::ModuleList stage_norms{nullptr};
    torch::nn::ModuleList psap{nullptr};             // index = stage (0 = stride 4)
    torch::nn::ModuleList up{nullptr};               // index i: stage i+1 -> stage i
    torch::nn::ModuleList fuse_a{nullptr};
    torch::nn::ModuleList fuse_b{nullptr};
    torch::nn::ConvTranspose3d head_up1{nullptr};
    torch::nn::InstanceNorm3d head_norm1{nullptr};
    torch::nn::ConvTranspose3d head_up2{nullptr};
    torch::nn::InstanceNorm3d head_norm2{nullptr};
    torch::nn::Conv3d head_out{nullptr};
    RffPrompt rff{nullptr};

private:
    torch::Tensor condition(int stage, const torch::Tensor& x, const PromptBatch& prompts,
                            const torch::Tensor& rff_pooled);
};
TORCH_MODULE(SegModel);

/// Lightweight cross-patch prompt predictor: 3-level encoder-decoder over the stacked
/// (clicked image, its prediction, neighbour image), output heatmap in [0, 1] on the
/// neighbour's grid.
struct CppModelImpl : torch::nn::Module {
    explicit CppModelImpl(const NetworkConfig& cfg);

    /// All inputs [B, 1, D, H, W]; returns [B, 1, D, H, W].
    torch::Tensor forward(const torch::Tensor& u_img, const torch::Tensor& u_pred,
                          const torch::Tensor& v_img);

    ConvNormAct enc1a{nullptr}, enc1b{nullptr};
    ConvNormAct enc2a{nullptr}, enc2b{nullptr};
    ConvNormAct enc3a{nullptr}, enc3b{nullptr};
    torch::nn::Conv3d up3{nullptr};
    ConvNormAct dec2a{nullptr}, dec2b{nullptr};
    torch::nn::Conv3d up2{nullptr};
    ConvNormAct dec1a{nullptr}, dec1b{nullptr};
    torch::nn::Conv3d out{nullptr};
};
TORCH_MODULE(CppModel);

/// Builds the segmentation network with a deterministic initialization.
SegModel make_seg_model(const NetworkConfig& cfg, std::uint64_t seed);
CppModel make_cpp_model(const NetworkConfig& cfg, std::uint64_t seed);

std::int64_t count_parameters(const torch::nn::Module& model);

/// Eval-mode forward used by inference; checks the input range and patch shape.
torch::Tensor seg_forward(SegModel& model, const torch::Tensor& patch, const PromptBatch& prompts);
torch::Tensor cpp_forward(CppModel& model, const torch::Tensor& u_img, const torch::Tensor& u_pred,
                          const torch::Tensor& v_img);

// --- grid <-> tensor ---------------------------------------------------------------------

/// [1, 1, z, y, x] float tensor sharing nothing with the grid.
torch::Tensor to_tensor(const Grid<float>& g);
torch::Tensor to_tensor(const Mask& m);
Grid<float> to_grid(const torch::Tensor& t);
/// [1, 3, z, y, x] stacked P, N, Y.
torch::Tensor to_tensor(const PromptMaps& maps);

}  // namespace promptseg
