#include "promptseg/network.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace promptseg {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.01;

torch::Tensor leaky(const torch::Tensor& x) {
    return torch::leaky_relu(x, kLeakySlope);
}

template <std::size_t N>
std::string join(const std::array<int, N>& a) {
    std::ostringstream os;
    for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << a[i];
    return os.str();
}

template <std::size_t N>
std::array<int, N> ints_of(const KeyValueConfig& kv, const std::string& key, std::array<int, N> fallback) {
    if (!kv.has(key)) return fallback;
    const auto v = kv.get_ints(key);
    if (v.size() != N) {
        throw Error(ErrorCode::Parse, "config key '" + key + "' needs " + std::to_string(N) + " values");
    }
    std::array<int, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

// [B, C, D, H, W] -> [B, N, C]
torch::Tensor to_tokens(const torch::Tensor& x) {
    return x.flatten(2).transpose(1, 2);
}

torch::Tensor from_tokens(const torch::Tensor& t, std::array<int64_t, 3> grid) {
    const auto b = t.size(0);
    const auto c = t.size(2);
    return t.transpose(1, 2).reshape({b, c, grid[0], grid[1], grid[2]});
}

std::array<int64_t, 3> spatial(const torch::Tensor& x) {
    return {x.size(2), x.size(3), x.size(4)};
}

torch::nn::Conv3d conv3(int in, int out, int kernel, int stride, bool bias, int groups = 1) {
    return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, kernel)
                                 .stride(stride)
                                 .padding(kernel / 2)
                                 .bias(bias)
                                 .groups(groups));
}

torch::nn::InstanceNorm3d affine_norm(int channels) {
    return torch::nn::InstanceNorm3d(torch::nn::InstanceNorm3dOptions(channels).affine(true));
}

}  // namespace

std::string_view prompt_encoder_name(PromptEncoderKind k) {
    return k == PromptEncoderKind::Psap ? "psap" : "rff";
}

PromptEncoderKind parse_prompt_encoder(std::string_view s) {
    if (s == "psap") return PromptEncoderKind::Psap;
    if (s == "rff") return PromptEncoderKind::Rff;
    throw Error(ErrorCode::Parse, "unknown prompt encoder '" + std::string(s) + "' (psap|rff)");
}

NetworkConfig NetworkConfig::paper() { return {}; }

NetworkConfig NetworkConfig::desk() {
    NetworkConfig c;
    c.variant = Variant::Desk;
    c.patch_size = Extent3::cube(32);
    c.stage_dims = {16, 32, 64, 128};
    c.stage_depths = {1, 1, 2, 1};
    c.stem_channels = 8;
    c.psap_hidden = 16;
    c.head_channels = {8, 8};
    c.cpp_base_channels = 8;
    c.rff_features = 32;
    return c;
}

void NetworkConfig::validate() const {
    for (int axis = 0; axis < 3; ++axis) {
        if (patch_size[axis] < 32 || patch_size[axis] % 32 != 0) {
            throw Error(ErrorCode::InvalidInput, "patch size must be a positive multiple of 32");
        }
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (stage_dims[i] < 1 || stage_depths[i] < 1 || stage_heads[i] < 1 || sr_ratios[i] < 1) {
            throw Error(ErrorCode::InvalidInput, "stage sizes must be positive");
        }
        if (stage_dims[i] % stage_heads[i] != 0) {
            throw Error(ErrorCode::InvalidInput, "stage width must be divisible by its head count");
        }
    }
    if (stem_channels < 1 || mlp_ratio < 1 || psap_hidden < 1 || head_channels[0] < 1 ||
        head_channels[1] < 1 || cpp_base_channels < 1 || rff_features < 1) {
        throw Error(ErrorCode::InvalidInput, "layer widths must be positive");
    }
    if (!(prompt_sigma_vox > 0)) throw Error(ErrorCode::InvalidInput, "prompt sigma must be positive");
}

KeyValueConfig NetworkConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set("variant", variant == Variant::Paper ? "paper" : "desk");
    kv.set("patch_size", join(std::array<int, 3>{patch_size.x, patch_size.y, patch_size.z}));
    kv.set("stage_dims", join(stage_dims));
    kv.set("stage_depths", join(stage_depths));
    kv.set("stage_heads", join(stage_heads));
    kv.set("sr_ratios", join(sr_ratios));
    kv.set("stem_channels", std::to_string(stem_channels));
    kv.set("mlp_ratio", std::to_string(mlp_ratio));
    kv.set("psap_hidden", std::to_string(psap_hidden));
    kv.set("head_channels", join(head_channels));
    kv.set("cpp_base_channels", std::to_string(cpp_base_channels));
    std::ostringstream sigma;
    sigma.precision(17);
    sigma << prompt_sigma_vox;
    kv.set("prompt_sigma_vox", sigma.str());
    kv.set("prompt_encoder", std::string(prompt_encoder_name(prompt_encoder)));
    kv.set("rff_features", std::to_string(rff_features));
    std::ostringstream scale;
    scale.precision(17);
    scale << rff_scale;
    kv.set("rff_scale", scale.str());
    kv.set("rff_seed", std::to_string(rff_seed));
    return kv;
}

NetworkConfig NetworkConfig::from_kv(const KeyValueConfig& kv) {
    const std::string variant = kv.get_or("variant", kv.get_or("preset", "paper"));
    NetworkConfig c;
    if (variant == "desk") {
        c = desk();
    } else if (variant != "paper") {
        throw Error(ErrorCode::Parse, "unknown network variant '" + variant + "'");
    }
    const auto p = ints_of<3>(kv, "patch_size", {c.patch_size.x, c.patch_size.y, c.patch_size.z});
    c.patch_size = {p[0], p[1], p[2]};
    c.stage_dims = ints_of<4>(kv, "stage_dims", c.stage_dims);
    c.stage_depths = ints_of<4>(kv, "stage_depths", c.stage_depths);
    c.stage_heads = ints_of<4>(kv, "stage_heads", c.stage_heads);
    c.sr_ratios = ints_of<4>(kv, "sr_ratios", c.sr_ratios);
    c.stem_channels = static_cast<int>(kv.get_int("stem_channels", c.stem_channels));
    c.mlp_ratio = static_cast<int>(kv.get_int("mlp_ratio", c.mlp_ratio));
    c.psap_hidden = static_cast<int>(kv.get_int("psap_hidden", c.psap_hidden));
    c.head_channels = ints_of<2>(kv, "head_channels", c.head_channels);
    c.cpp_base_channels = static_cast<int>(kv.get_int("cpp_base_channels", c.cpp_base_channels));
    c.prompt_sigma_vox = kv.get_double("prompt_sigma_vox", c.prompt_sigma_vox);
    if (kv.has("prompt_encoder")) c.prompt_encoder = parse_prompt_encoder(kv.get("prompt_encoder"));
    c.rff_features = static_cast<int>(kv.get_int("rff_features", c.rff_features));
    c.rff_scale = kv.get_double("rff_scale", c.rff_scale);
    c.rff_seed = static_cast<std::uint64_t>(kv.get_int("rff_seed", static_cast<long long>(c.rff_seed)));
    c.validate();
    return c;
}

// --- blocks ----------------------------------------------------------------------------

ConvNormActImpl::ConvNormActImpl(int in, int out, int kernel, int stride) {
    conv = register_module("conv", conv3(in, out, kernel, stride, false));
    norm = register_module("norm", affine_norm(out));
}

torch::Tensor ConvNormActImpl::forward(const torch::Tensor& x) {
    return leaky(norm(conv(x)));
}

PixelAttentionImpl::PixelAttentionImpl(int channels) {
    conv = register_module("conv", conv3(channels, channels, 3, 1, true, channels));
}

torch::Tensor PixelAttentionImpl::forward(const torch::Tensor& x) {
    return x * torch::sigmoid(conv(x));
}

PatchEmbedImpl::PatchEmbedImpl(int in, int out) {
    conv = register_module("conv", conv3(in, out, 3, 2, true));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({out})));
    pos = register_module("pos", PixelAttention(out));
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& x) {
    auto y = conv(x);
    const auto g = spatial(y);
    y = from_tokens(norm(to_tokens(y)), g);
    return pos(y);
}

EfficientAttentionImpl::EfficientAttentionImpl(int dim_, int heads_, int sr_ratio_)
    : dim(dim_), heads(heads_), sr_ratio(sr_ratio_),
      scale(1.0 / std::sqrt(static_cast<double>(dim_ / heads_))) {
    q = register_module("q", torch::nn::Linear(dim, dim));
    kv = register_module("kv", torch::nn::Linear(dim, 2 * dim));
    proj = register_module("proj", torch::nn::Linear(dim, dim));
    if (sr_ratio > 1) {
        sr = register_module("sr", torch::nn::Conv3d(torch::nn::Conv3dOptions(dim, dim, sr_ratio + 1)
                                                         .stride(sr_ratio)
                                                         .padding(sr_ratio / 2)
                                                         .groups(dim)));
        sr_norm = register_module("sr_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    }
    if (heads > 1) {
        transform_conv = register_module("transform_conv",
                                         torch::nn::Conv2d(torch::nn::Conv2dOptions(heads, heads, 1)));
        transform_norm = register_module("transform_norm", torch::nn::InstanceNorm2d(heads));
    }
}

torch::Tensor EfficientAttentionImpl::forward(const torch::Tensor& x, std::array<int64_t, 3> grid) {
    const auto b = x.size(0);
    const auto n = x.size(1);
    const int64_t dh = dim / heads;
    auto qh = q(x).reshape({b, n, heads, dh}).permute({0, 2, 1, 3});

    torch::Tensor kv_in = x;
    if (sr_ratio > 1) {
        auto reduced = sr(from_tokens(x, grid));
        kv_in = sr_norm(to_tokens(reduced));
    }
    const auto m = kv_in.size(1);
    auto kvh = kv(kv_in).reshape({b, m, 2, heads, dh}).permute({2, 0, 3, 1, 4});
    auto k = kvh[0];
    auto v = kvh[1];

    auto attn = torch::matmul(qh, k.transpose(-2, -1)) * scale;
    if (heads > 1 && m > 1) {
        attn = transform_conv(attn);
        attn = torch::softmax(attn, -1);
        attn = transform_norm(attn);
    } else {
        attn = torch::softmax(attn, -1);
    }
    auto out = torch::matmul(attn, v).transpose(1, 2).reshape({b, n, dim});
    return proj(out);
}

TransformerBlockImpl::TransformerBlockImpl(int dim, int heads, int sr_ratio, int mlp_ratio) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", EfficientAttention(dim, heads, sr_ratio));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1 = register_module("fc1", torch::nn::Linear(dim, dim * mlp_ratio));
    fc2 = register_module("fc2", torch::nn::Linear(dim * mlp_ratio, dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x, std::array<int64_t, 3> grid) {
    auto y = x + attn(norm1(x), grid);
    return y + fc2(torch::gelu(fc1(norm2(y))));
}

// --- prompt modulation -------------------------------------------------------------------

torch::Tensor instance_norm(const torch::Tensor& x) {
    return F::instance_norm(x, F::InstanceNormFuncOptions().eps(1e-5));
}

torch::Tensor resize_prompt(const torch::Tensor& full, const torch::Tensor& like) {
    const auto g = spatial(like);
    if (spatial(full) == g) return full;
    return torch::adaptive_avg_pool3d(full, {g[0], g[1], g[2]});
}

PsapImpl::PsapImpl(int channels, int hidden, int prompt_channels) {
    shared = register_module("shared", conv3(prompt_channels, hidden, 3, 1, true));
    gamma_conv = register_module("gamma", conv3(hidden, channels, 3, 1, true));
    beta_conv = register_module("beta", conv3(hidden, channels, 3, 1, true));
    torch::NoGradGuard guard;
    gamma_conv->weight.zero_();
    gamma_conv->bias.fill_(1.0);
    beta_conv->weight.zero_();
    beta_conv->bias.zero_();
}

torch::Tensor PsapImpl::gamma(const torch::Tensor& prompt) {
    return gamma_conv(torch::relu(shared(prompt)));
}

torch::Tensor PsapImpl::beta(const torch::Tensor& prompt) {
    return beta_conv(torch::relu(shared(prompt)));
}

torch::Tensor PsapImpl::forward(const torch::Tensor& x, const torch::Tensor& prompt) {
    if (spatial(x) != spatial(prompt) || x.size(0) != prompt.size(0)) {
        throw Error(ErrorCode::ShapeMismatch, "prompt map does not match the feature grid");
    }
    auto normed = instance_norm(x);
    if (identity_modulation) return normed;
    auto h = torch::relu(shared(prompt));
    return gamma_conv(h) * normed + beta_conv(h);
}

torch::Tensor PsapImpl::modulate(const torch::Tensor& x, const torch::Tensor& full_prompt) {
    return forward(x, resize_prompt(full_prompt, x));
}

RffPromptImpl::RffPromptImpl(const NetworkConfig& cfg) : m(cfg.rff_features) {
    const auto enc = RFFEncoder::create(m, cfg.rff_seed, cfg.rff_scale, 3);
    b = register_buffer("b", torch::tensor(enc.b, torch::kDouble).reshape({m, 3}).to(torch::kFloat));
    e_pos = register_parameter("e_pos", torch::zeros({2 * m}));
    e_neg = register_parameter("e_neg", torch::zeros({2 * m}));
    stage_proj = register_module("stage_proj", torch::nn::ModuleList());
    for (int d : cfg.stage_dims) stage_proj->push_back(torch::nn::Linear(2 * m, d));
}

torch::Tensor RffPromptImpl::encode(const torch::Tensor& v, const torch::Tensor& negative) const {
    const auto k = v.size(0);
    auto phase = 2.0 * std::numbers::pi * torch::matmul(v, b.to(v.dtype()).t());
    auto feats = torch::stack({torch::cos(phase), torch::sin(phase)}, -1).reshape({k, 2 * m});
    auto emb = torch::where(negative.unsqueeze(1), e_neg.to(v.dtype()).unsqueeze(0),
                            e_pos.to(v.dtype()).unsqueeze(0));
    return feats + emb;
}

torch::Tensor RffPromptImpl::pooled(const std::vector<std::vector<Click>>& clicks, const Extent3& patch,
                                    torch::Dtype dtype) const {
    std::vector<torch::Tensor> rows;
    rows.reserve(clicks.size());
    for (const auto& sample : clicks) {
        if (sample.empty()) {
            rows.push_back(torch::zeros({2 * m}, torch::TensorOptions().dtype(dtype)));
            continue;
        }
        std::vector<double> pos;
        std::vector<bool> neg;
        for (const auto& c : sample) {
            const auto v = normalize_position(c.position, patch);
            pos.insert(pos.end(), v.begin(), v.end());
            neg.push_back(c.polarity == Polarity::Negative);
        }
        auto v = torch::tensor(pos, torch::kDouble).reshape({static_cast<int64_t>(sample.size()), 3}).to(dtype);
        auto n = torch::zeros({static_cast<int64_t>(sample.size())}, torch::kBool);
        for (std::size_t i = 0; i < neg.size(); ++i) n[static_cast<int64_t>(i)] = static_cast<bool>(neg[i]);
        rows.push_back(encode(v, n).mean(0));
    }
    return torch::stack(rows);
}

RFFEncoder RffPromptImpl::to_encoder() const {
    RFFEncoder enc;
    enc.m = m;
    enc.d = 3;
    auto bd = b.to(torch::kDouble).contiguous();
    enc.b.assign(bd.data_ptr<double>(), bd.data_ptr<double>() + bd.numel());
    auto ep = e_pos.detach().to(torch::kDouble).contiguous();
    auto en = e_neg.detach().to(torch::kDouble).contiguous();
    enc.e_pos.assign(ep.data_ptr<double>(), ep.data_ptr<double>() + ep.numel());
    enc.e_neg.assign(en.data_ptr<double>(), en.data_ptr<double>() + en.numel());
    return enc;
}

// --- segmentation network ------------------------------------------------------------------

SegModelImpl::SegModelImpl(const NetworkConfig& cfg) : config(cfg) {
    cfg.validate();
    const auto& d = cfg.stage_dims;
    stem1 = register_module("stem1", ConvNormAct(1, cfg.stem_channels, 3, 2));
    stem2 = register_module("stem2", ConvNormAct(cfg.stem_channels, d[0], 3, 2));
    stem_pos = register_module("stem_pos", PixelAttention(d[0]));

    patch_embed = register_module("patch_embed", torch::nn::ModuleList());
    for (std::size_t i = 1; i < 4; ++i) patch_embed->push_back(PatchEmbed(d[i - 1], d[i]));

    stage_norms = register_module("stage_norms", torch::nn::ModuleList());
    for (std::size_t s = 0; s < 4; ++s) {
        blocks[s] = register_module("blocks" + std::to_string(s), torch::nn::ModuleList());
        for (int j = 0; j < cfg.stage_depths[s]; ++j) {
            blocks[s]->push_back(TransformerBlock(d[s], cfg.stage_heads[s], cfg.sr_ratios[s], cfg.mlp_ratio));
        }
        stage_norms->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({d[s]})));
    }

    if (cfg.prompt_encoder == PromptEncoderKind::Psap) {
        psap = register_module("psap", torch::nn::ModuleList());
        for (std::size_t s = 0; s < 4; ++s) psap->push_back(Psap(d[s], cfg.psap_hidden));
    } else {
        rff = register_module("rff", RffPrompt(cfg));
    }

    up = register_module("up", torch::nn::ModuleList());
    fuse_a = register_module("fuse_a", torch::nn::ModuleList());
    fuse_b = register_module("fuse_b", torch::nn::ModuleList());
    for (std::size_t s = 0; s < 3; ++s) {
        up->push_back(torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(d[s + 1], d[s], 2).stride(2)));
        fuse_a->push_back(ConvNormAct(2 * d[s], d[s]));
        fuse_b->push_back(ConvNormAct(d[s], d[s]));
    }

    const auto& h = cfg.head_channels;
    head_up1 = register_module(
        "head_up1", torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(d[0], h[0], 2).stride(2)));
    head_norm1 = register_module("head_norm1", affine_norm(h[0]));
    head_up2 = register_module(
        "head_up2", torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(h[0], h[1], 2).stride(2)));
    head_norm2 = register_module("head_norm2", affine_norm(h[1]));
    head_out = register_module("head_out", torch::nn::Conv3d(torch::nn::Conv3dOptions(h[1], 1, 1)));
}

EncoderFeatures SegModelImpl::encode(const torch::Tensor& image) {
    if (image.dim() != 5 || image.size(1) != 1) {
        throw Error(ErrorCode::ShapeMismatch, "image batch must be [B, 1, D, H, W]");
    }
    EncoderFeatures f;
    auto x = stem_pos(stem2(stem1(image)));
    for (std::size_t s = 0; s < 4; ++s) {
        if (s > 0) x = patch_embed[s - 1]->as<PatchEmbedImpl>()->forward(x);
        const auto g = spatial(x);
        auto t = to_tokens(x);
        for (const auto& blk : *blocks[s]) t = blk->as<TransformerBlockImpl>()->forward(t, g);
        t = stage_norms[s]->as<torch::nn::LayerNormImpl>()->forward(t);
        x = from_tokens(t, g);
        f.stages[s] = x;
    }
    return f;
}

torch::Tensor SegModelImpl::condition(int stage, const torch::Tensor& x, const PromptBatch& prompts,
                                      const torch::Tensor& rff_pooled) {
    const auto s = static_cast<std::size_t>(stage);
    if (config.prompt_encoder == PromptEncoderKind::Psap) {
        return psap[s]->as<PsapImpl>()->modulate(x, prompts.maps);
    }
    auto shift = rff->stage_proj[s]->as<torch::nn::LinearImpl>()->forward(rff_pooled);
    return instance_norm(x) + shift.view({shift.size(0), shift.size(1), 1, 1, 1});
}

torch::Tensor SegModelImpl::forward(const torch::Tensor& image, const PromptBatch& prompts) {
    const auto b = image.size(0);
    torch::Tensor pooled;
    if (config.prompt_encoder == PromptEncoderKind::Psap) {
        if (!prompts.maps.defined() || prompts.maps.dim() != 5 || prompts.maps.size(0) != b ||
            prompts.maps.size(1) != 3 || spatial(prompts.maps) != spatial(image)) {
            throw Error(ErrorCode::ShapeMismatch, "prompt maps must be [B, 3, D, H, W] matching the image");
        }
    } else {
        if (static_cast<int64_t>(prompts.clicks.size()) != b) {
            throw Error(ErrorCode::ShapeMismatch, "one click list per batch sample is required");
        }
        const auto g = spatial(image);
        const Extent3 patch{static_cast<int>(g[2]), static_cast<int>(g[1]), static_cast<int>(g[0])};
        pooled = rff->pooled(prompts.clicks, patch, image.scalar_type()).to(image.device());
    }

    const auto f = encode(image);
    auto x = f.stages[3];
    for (int s = 3; s >= 1; --s) {
        const auto i = static_cast<std::size_t>(s - 1);
        x = leaky(condition(s, x, prompts, pooled));
        x = up[i]->as<torch::nn::ConvTranspose3dImpl>()->forward(x);
        x = torch::cat({x, f.stages[i]}, 1);
        x = fuse_a[i]->as<ConvNormActImpl>()->forward(x);
        x = fuse_b[i]->as<ConvNormActImpl>()->forward(x);
    }
    x = leaky(condition(0, x, prompts, pooled));
    x = leaky(head_norm1(head_up1(x)));
    x = leaky(head_norm2(head_up2(x)));
    return head_out(x);
}

// --- cross-patch predictor ------------------------------------------------------------------

CppModelImpl::CppModelImpl(const NetworkConfig& cfg) {
    const int b = cfg.cpp_base_channels;
    enc1a = register_module("enc1a", ConvNormAct(3, b, 3, 2));
    enc1b = register_module("enc1b", ConvNormAct(b, b));
    enc2a = register_module("enc2a", ConvNormAct(b, 2 * b, 3, 2));
    enc2b = register_module("enc2b", ConvNormAct(2 * b, 2 * b));
    enc3a = register_module("enc3a", ConvNormAct(2 * b, 4 * b, 3, 2));
    enc3b = register_module("enc3b", ConvNormAct(4 * b, 4 * b));
    up3 = register_module("up3", torch::nn::Conv3d(torch::nn::Conv3dOptions(4 * b, 2 * b, 1)));
    dec2a = register_module("dec2a", ConvNormAct(4 * b, 2 * b));
    dec2b = register_module("dec2b", ConvNormAct(2 * b, 2 * b));
    up2 = register_module("up2", torch::nn::Conv3d(torch::nn::Conv3dOptions(2 * b, b, 1)));
    dec1a = register_module("dec1a", ConvNormAct(2 * b, b));
    dec1b = register_module("dec1b", ConvNormAct(b, b));
    out = register_module("out", torch::nn::Conv3d(torch::nn::Conv3dOptions(b, 1, 1)));
}

namespace {

torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like) {
    const auto g = spatial(like);
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{g[0], g[1], g[2]})
                                 .mode(torch::kTrilinear)
                                 .align_corners(false));
}

}  // namespace

torch::Tensor CppModelImpl::forward(const torch::Tensor& u_img, const torch::Tensor& u_pred,
                                    const torch::Tensor& v_img) {
    if (u_img.sizes() != u_pred.sizes() || u_img.sizes() != v_img.sizes() || u_img.dim() != 5 ||
        u_img.size(1) != 1) {
        throw Error(ErrorCode::ShapeMismatch, "cross-patch inputs must share one [B, 1, D, H, W] shape");
    }
    auto x = torch::cat({u_img, u_pred, v_img}, 1);
    auto e1 = enc1b(enc1a(x));
    auto e2 = enc2b(enc2a(e1));
    auto e3 = enc3b(enc3a(e2));
    auto d2 = dec2b(dec2a(torch::cat({up3(upsample_to(e3, e2)), e2}, 1)));
    auto d1 = dec1b(dec1a(torch::cat({up2(upsample_to(d2, e1)), e1}, 1)));
    return torch::sigmoid(upsample_to(out(d1), u_img));
}

// --- construction and helpers ----------------------------------------------------------------

SegModel make_seg_model(const NetworkConfig& cfg, std::uint64_t seed) {
    torch::manual_seed(seed);
    SegModel m(cfg);
    return m;
}

CppModel make_cpp_model(const NetworkConfig& cfg, std::uint64_t seed) {
    torch::manual_seed(seed);
    CppModel m(cfg);
    return m;
}

std::int64_t count_parameters(const torch::nn::Module& model) {
    std::int64_t n = 0;
    for (const auto& p : model.parameters()) n += p.numel();
    return n;
}

torch::Tensor seg_forward(SegModel& model, const torch::Tensor& patch, const PromptBatch& prompts) {
    const auto& ps = model->config.patch_size;
    if (patch.dim() != 5 || patch.size(1) != 1 || patch.size(2) != ps.z || patch.size(3) != ps.y ||
        patch.size(4) != ps.x) {
        throw Error(ErrorCode::ShapeMismatch, "patch does not match the configured patch size");
    }
    if (patch.min().item<double>() < 0.0 || patch.max().item<double>() > 1.0) {
        throw Error(ErrorCode::InvalidInput, "patch intensities must be normalized to [0, 1]");
    }
    torch::NoGradGuard guard;
    model->eval();
    return model->forward(patch, prompts);
}

torch::Tensor cpp_forward(CppModel& model, const torch::Tensor& u_img, const torch::Tensor& u_pred,
                          const torch::Tensor& v_img) {
    torch::NoGradGuard guard;
    model->eval();
    return model->forward(u_img, u_pred, v_img);
}

torch::Tensor to_tensor(const Grid<float>& g) {
    const auto& e = g.extent();
    return torch::from_blob(const_cast<float*>(g.data()), {1, 1, e.z, e.y, e.x}, torch::kFloat).clone();
}

torch::Tensor to_tensor(const Mask& m) {
    const auto& e = m.extent();
    return torch::from_blob(const_cast<std::uint8_t*>(m.data()), {1, 1, e.z, e.y, e.x}, torch::kUInt8)
        .to(torch::kFloat);
}

Grid<float> to_grid(const torch::Tensor& t) {
    if (t.dim() < 3) throw Error(ErrorCode::ShapeMismatch, "tensor must have at least 3 dimensions");
    const auto n = t.dim();
    if (t.numel() != t.size(n - 3) * t.size(n - 2) * t.size(n - 1)) {
        throw Error(ErrorCode::ShapeMismatch, "tensor holds more than one volume");
    }
    const Extent3 e{static_cast<int>(t.size(n - 1)), static_cast<int>(t.size(n - 2)),
                    static_cast<int>(t.size(n - 3))};
    auto c = t.detach().to(torch::kFloat).contiguous();
    const float* p = c.data_ptr<float>();
    return Grid<float>(e, std::vector<float>(p, p + c.numel()));
}

torch::Tensor to_tensor(const PromptMaps& maps) {
    return torch::cat({to_tensor(maps.p_map), to_tensor(maps.n_map), to_tensor(maps.y_map)}, 1);
}

}  // namespace promptseg
