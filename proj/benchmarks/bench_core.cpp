#include <benchmark/benchmark.h>

#include <random>

#include "promptseg/clicksim.hpp"
#include "promptseg/evaluate.hpp"
#include "promptseg/metrics.hpp"
#include "promptseg/network.hpp"
#include "promptseg/phantom.hpp"
#include "promptseg/torch_backend.hpp"

using namespace promptseg;

namespace {

Mask sphere(const Extent3& e, Index3 c, double r) {
    Mask m(e);
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x) {
                const double dx = x - c.x, dy = y - c.y, dz = z - c.z;
                m(x, y, z) = dx * dx + dy * dy + dz * dz <= r * r;
            }
    return m;
}

void BM_SegForwardDesk(benchmark::State& state) {
    torch::set_num_threads(1);
    auto cfg = NetworkConfig::desk();
    auto model = make_seg_model(cfg, 1);
    const auto x = torch::rand({1, 1, 32, 32, 32});
    const std::vector<Click> clicks{{{16, 16, 16}, Polarity::Positive}};
    PromptBatch pb;
    pb.maps = to_tensor(render_clicks(clicks, cfg.patch_size));
    pb.clicks = {clicks};
    for (auto _ : state) benchmark::DoNotOptimize(seg_forward(model, x, pb));
}
BENCHMARK(BM_SegForwardDesk)->Unit(benchmark::kMillisecond);

void BM_CppForwardDesk(benchmark::State& state) {
    torch::set_num_threads(1);
    auto model = make_cpp_model(NetworkConfig::desk(), 2);
    const auto x = torch::rand({1, 1, 32, 32, 32});
    for (auto _ : state) benchmark::DoNotOptimize(cpp_forward(model, x, x, x));
}
BENCHMARK(BM_CppForwardDesk)->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Mask m = sphere(Extent3::cube(side), {side / 2, side / 2, side / 2}, side / 3.0);
    for (auto _ : state) benchmark::DoNotOptimize(distance_transform(m));
    state.SetItemsProcessed(state.iterations() * m.size());
}
BENCHMARK(BM_DistanceTransform)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_NextClick(benchmark::State& state) {
    const Extent3 e = Extent3::cube(static_cast<int>(state.range(0)));
    const Mask gt = sphere(e, {e.x / 2, e.y / 2, e.z / 2}, e.x / 3.0);
    const Mask pred = sphere(e, {e.x / 2 + 3, e.y / 2, e.z / 2}, e.x / 3.0 - 2);
    for (auto _ : state) benchmark::DoNotOptimize(next_click(gt, pred));
}
BENCHMARK(BM_NextClick)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Nsd(benchmark::State& state) {
    const Extent3 e = Extent3::cube(static_cast<int>(state.range(0)));
    const Mask a = sphere(e, {e.x / 2, e.y / 2, e.z / 2}, e.x / 3.0);
    const Mask b = sphere(e, {e.x / 2 + 2, e.y / 2 - 1, e.z / 2}, e.x / 3.0 - 1);
    for (auto _ : state) benchmark::DoNotOptimize(nsd(a, b, {1.5, 1.5, 1.5}, 5.0));
}
BENCHMARK(BM_Nsd)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_EngineClickDesk(benchmark::State& state) {
    torch::set_num_threads(1);
    const auto cfg = NetworkConfig::desk();
    ModelBundle bundle{cfg, make_seg_model(cfg, 1), nullptr, {}};
    LoadedEngine loaded(std::move(bundle));
    auto [v, l] = make_phantom(random_phantom_spec(3), 3);
    const Case c = preprocess_case("bench", v, l);
    for (auto _ : state) {
        Session s = loaded.engine.new_session(c.image);
        benchmark::DoNotOptimize(loaded.engine.click(s, {{32, 32, 32}, Polarity::Positive}, false));
    }
}
BENCHMARK(BM_EngineClickDesk)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
