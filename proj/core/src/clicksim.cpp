#include "promptseg/clicksim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace promptseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas w (q - p)^2 + f(p) (Felzenszwalb & Huttenlocher), in place over a
// strided line. Entries equal to +inf are not parabola sites.
void edt_line(double* f, std::int64_t n, std::int64_t stride, double w, std::vector<double>& buf_f,
              std::vector<double>& buf_d, std::vector<std::int64_t>& v, std::vector<double>& zs) {
    buf_f.resize(static_cast<std::size_t>(n));
    buf_d.resize(static_cast<std::size_t>(n));
    v.resize(static_cast<std::size_t>(n));
    zs.resize(static_cast<std::size_t>(n) + 1);
    for (std::int64_t i = 0; i < n; ++i) buf_f[static_cast<std::size_t>(i)] = f[i * stride];

    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        const double fq = buf_f[static_cast<std::size_t>(q)];
        if (fq == kInf) continue;
        while (k >= 0) {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            const double fp = buf_f[static_cast<std::size_t>(p)];
            const double s = ((fq + w * q * q) - (fp + w * p * p)) / (2.0 * w * (q - p));
            if (s <= zs[static_cast<std::size_t>(k)]) {
                --k;
            } else {
                ++k;
                v[static_cast<std::size_t>(k)] = q;
                zs[static_cast<std::size_t>(k)] = s;
                zs[static_cast<std::size_t>(k) + 1] = kInf;
                break;
            }
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            zs[0] = -kInf;
            zs[1] = kInf;
        }
    }
    if (k < 0) return;  // no sites: the line stays +inf

    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (zs[static_cast<std::size_t>(j) + 1] < static_cast<double>(q)) ++j;
        const std::int64_t p = v[static_cast<std::size_t>(j)];
        const double d = static_cast<double>(q - p);
        buf_d[static_cast<std::size_t>(q)] = w * d * d + buf_f[static_cast<std::size_t>(p)];
    }
    for (std::int64_t i = 0; i < n; ++i) f[i * stride] = buf_d[static_cast<std::size_t>(i)];
}

void edt_inplace(Grid<double>& g, const Spacing3& spacing) {
    const auto e = g.extent();
    std::vector<double> bf;
    std::vector<double> bd;
    std::vector<std::int64_t> v;
    std::vector<double> zs;
    const std::int64_t sx = 1;
    const std::int64_t sy = e.x;
    const std::int64_t sz = static_cast<std::int64_t>(e.x) * e.y;
    double* base = g.data();
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            edt_line(base + g.linear(0, y, z), e.x, sx, spacing[0] * spacing[0], bf, bd, v, zs);
    for (int z = 0; z < e.z; ++z)
        for (int x = 0; x < e.x; ++x)
            edt_line(base + g.linear(x, 0, z), e.y, sy, spacing[1] * spacing[1], bf, bd, v, zs);
    for (int y = 0; y < e.y; ++y)
        for (int x = 0; x < e.x; ++x)
            edt_line(base + g.linear(x, y, 0), e.z, sz, spacing[2] * spacing[2], bf, bd, v, zs);
}

}  // namespace

ErrorRegion error_region(const Mask& gt, const Mask& pred) {
    require_same_extent(gt, pred, "error_region");
    ErrorRegion r{Mask(gt.extent()), Mask(gt.extent())};
    for (std::size_t i = 0; i < gt.size(); ++i) {
        r.false_neg[i] = gt[i] && !pred[i];
        r.false_pos[i] = pred[i] && !gt[i];
    }
    return r;
}

Grid<double> squared_distance_to(const Mask& seeds, const Spacing3& spacing) {
    Grid<double> g(seeds.extent(), kInf);
    for (std::size_t i = 0; i < seeds.size(); ++i)
        if (seeds[i]) g[i] = 0.0;
    edt_inplace(g, spacing);
    return g;
}

Grid<double> distance_transform(const Mask& region) {
    const auto& e = region.extent();
    // One-voxel exterior ring so the grid border acts as outside.
    const Extent3 pe{e.x + 2, e.y + 2, e.z + 2};
    Grid<double> g(pe, 0.0);
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x)
                if (region(x, y, z)) g(x + 1, y + 1, z + 1) = kInf;
    edt_inplace(g, {1.0, 1.0, 1.0});
    Grid<double> out(e, 0.0);
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x)
                if (region(x, y, z)) out(x, y, z) = std::sqrt(g(x + 1, y + 1, z + 1));
    return out;
}

Click first_click(const Mask& gt, std::uint64_t rng_seed) {
    const std::int64_t count = count_true(gt);
    if (count == 0) throw Error(ErrorCode::NoForeground, "first_click: empty foreground");
    std::mt19937_64 rng(rng_seed);
    std::int64_t target = std::uniform_int_distribution<std::int64_t>(0, count - 1)(rng);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] && target-- == 0) {
            return {gt.unravel(static_cast<std::int64_t>(i)), Polarity::Positive};
        }
    }
    throw Error(ErrorCode::NoForeground, "first_click: unreachable");
}

std::optional<Index3> argmax_lexicographic(const Grid<double>& values, const Mask& where) {
    require_same_extent(values, where, "argmax_lexicographic");
    std::optional<Index3> best;
    double best_value = -kInf;
    const auto& e = values.extent();
    // Iterate x outermost so that the first strict maximum is the lexicographic minimum.
    for (int x = 0; x < e.x; ++x)
        for (int y = 0; y < e.y; ++y)
            for (int z = 0; z < e.z; ++z) {
                if (!where(x, y, z)) continue;
                const double v = values(x, y, z);
                if (!best || v > best_value) {
                    best = Index3{x, y, z};
                    best_value = v;
                }
            }
    return best;
}

std::pair<Grid<int>, int> connected_components(const Mask& m) {
    const auto& e = m.extent();
    Grid<int> ids(e, 0);
    int count = 0;
    std::vector<std::int64_t> stack;
    for (std::size_t start = 0; start < m.size(); ++start) {
        if (!m[start] || ids[start] != 0) continue;
        ++count;
        ids[start] = count;
        stack.assign(1, static_cast<std::int64_t>(start));
        while (!stack.empty()) {
            const auto cur = stack.back();
            stack.pop_back();
            const Index3 p = m.unravel(cur);
            const Index3 nbrs[6] = {{p.x - 1, p.y, p.z}, {p.x + 1, p.y, p.z}, {p.x, p.y - 1, p.z},
                                    {p.x, p.y + 1, p.z}, {p.x, p.y, p.z - 1}, {p.x, p.y, p.z + 1}};
            for (const auto& q : nbrs) {
                if (!e.contains(q)) continue;
                const auto qi = static_cast<std::size_t>(m.linear(q));
                if (m[qi] && ids[qi] == 0) {
                    ids[qi] = count;
                    stack.push_back(static_cast<std::int64_t>(qi));
                }
            }
        }
    }
    return {std::move(ids), count};
}

namespace {

// Largest component of `m` and its size; equal sizes keep the lower component id, which is
// the one whose first voxel comes first in memory order.
std::pair<Mask, std::int64_t> largest_component(const Mask& m) {
    auto [ids, n] = connected_components(m);
    if (n == 0) return {Mask(m.extent()), 0};
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(n) + 1, 0);
    for (std::size_t i = 0; i < ids.size(); ++i) ++sizes[static_cast<std::size_t>(ids[i])];
    int best = 1;
    for (int c = 2; c <= n; ++c)
        if (sizes[static_cast<std::size_t>(c)] > sizes[static_cast<std::size_t>(best)]) best = c;
    Mask out(m.extent());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = ids[i] == best;
    return {std::move(out), sizes[static_cast<std::size_t>(best)]};
}

}  // namespace

std::optional<Click> next_click(const Mask& gt, const Mask& pred, ErrorSelection selection) {
    auto err = error_region(gt, pred);
    Mask region;
    Polarity polarity = Polarity::Positive;
    if (selection == ErrorSelection::ByClass) {
        const auto nfn = count_true(err.false_neg);
        const auto nfp = count_true(err.false_pos);
        if (nfn == 0 && nfp == 0) return std::nullopt;
        if (nfn >= nfp) {
            region = std::move(err.false_neg);
        } else {
            region = std::move(err.false_pos);
            polarity = Polarity::Negative;
        }
    } else {
        auto [cfn, nfn] = largest_component(err.false_neg);
        auto [cfp, nfp] = largest_component(err.false_pos);
        if (nfn == 0 && nfp == 0) return std::nullopt;
        if (nfn >= nfp) {
            region = std::move(cfn);
        } else {
            region = std::move(cfp);
            polarity = Polarity::Negative;
        }
    }
    const auto dt = distance_transform(region);
    const auto at = argmax_lexicographic(dt, region);
    return Click{*at, polarity};
}

}  // namespace promptseg
