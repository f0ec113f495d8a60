#pragma once

#include <torch/torch.h>

#include <functional>

#include "promptseg/network.hpp"
#include "promptseg/prompts.hpp"

namespace promptseg::test {

// Central finite differences of sum(f(x) * weights) against autograd, over every element of
// x. Returns ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline double gradient_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                               double h = 1e-6) {
    x = x.detach().clone().set_requires_grad(true);
    torch::manual_seed(1234);
    const auto probe = f(x.detach());
    const auto weights = torch::randn_like(probe);
    auto loss = (f(x) * weights).sum();
    const auto analytic = torch::autograd::grad({loss}, {x})[0].detach().flatten();

    auto flat = x.detach().clone().flatten();
    auto numeric = torch::zeros_like(flat);
    torch::NoGradGuard guard;
    auto eval = [&](const torch::Tensor& v) { return (f(v.view(x.sizes())) * weights).sum().item<double>(); };
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = eval(flat);
        flat[i] = orig - h;
        const double down = eval(flat);
        flat[i] = orig;
        numeric[i] = (up - down) / (2 * h);
    }
    const double diff = (analytic - numeric).norm().item<double>();
    const double scale = std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
    return scale == 0 ? diff : diff / scale;
}

// Same check for a parameter tensor of `module`, perturbed in place.
inline double parameter_relative_error(const std::function<torch::Tensor()>& f, torch::nn::Module& module,
                                torch::Tensor& param, double h = 1e-6) {
    torch::manual_seed(99);
    const auto weights = torch::randn_like(f().detach());
    module.zero_grad();
    (f() * weights).sum().backward();
    const auto analytic = param.grad().detach().clone().flatten();

    torch::NoGradGuard guard;
    auto flat = param.view(-1);
    auto numeric = torch::zeros_like(analytic);
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = (f() * weights).sum().item<double>();
        flat[i] = orig - h;
        const double down = (f() * weights).sum().item<double>();
        flat[i] = orig;
        numeric[i] = (up - down) / (2 * h);
    }
    const double diff = (analytic - numeric).norm().item<double>();
    const double scale = std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
    return scale == 0 ? diff : diff / scale;
}

inline void randomize(torch::nn::Module& m, std::uint64_t seed) {
    torch::manual_seed(seed);
    torch::NoGradGuard guard;
    for (auto& p : m.parameters()) p.copy_(torch::randn_like(p) * 0.3);
}

inline PromptBatch one_click_prompts(const Extent3& patch, Index3 where) {
    const std::vector<Click> clicks{{where, Polarity::Positive}};
    PromptBatch pb;
    pb.maps = to_tensor(render_clicks(clicks, patch));
    pb.clicks = {clicks};
    return pb;
}

inline PromptBatch empty_prompts(const Extent3& patch) {
    PromptBatch pb;
    pb.maps = torch::zeros({1, 3, patch.z, patch.y, patch.x});
    pb.clicks = {{}};
    return pb;
}

}  // namespace promptseg::test
