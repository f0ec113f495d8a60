#include "promptseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace promptseg {

namespace {

void check_spacing(const Spacing3& s) {
    for (double c : s) {
        if (!(c > 0.0) || !std::isfinite(c)) {
            throw Error(ErrorCode::InvalidInput, "voxel spacing must be positive and finite");
        }
    }
}

// Continuous source index sampled by output voxel i.
double source_coord(int i, double out_spacing, double in_spacing) {
    return (i + 0.5) * out_spacing / in_spacing - 0.5;
}

}  // namespace

std::int64_t overlap_voxels(const PatchRef& a, const PatchRef& b) {
    std::int64_t n = 1;
    for (int axis = 0; axis < 3; ++axis) {
        const int lo = std::max(a.start[axis], b.start[axis]);
        const int hi = std::min(a.start[axis] + a.size[axis], b.start[axis] + b.size[axis]);
        if (hi <= lo) return 0;
        n *= hi - lo;
    }
    return n;
}

Extent3 resampled_extent(const Extent3& extent, const Spacing3& spacing, double target_spacing_mm) {
    Extent3 out;
    for (int axis = 0; axis < 3; ++axis) {
        const double len = extent[axis] * spacing[static_cast<std::size_t>(axis)] / target_spacing_mm;
        out[axis] = std::max(1, static_cast<int>(std::lround(len)));
    }
    return out;
}

Volume resample_image(const Volume& v, const Spacing3& target_spacing, const Extent3& target_extent) {
    check_spacing(v.spacing);
    check_spacing(target_spacing);
    const auto& in = v.data;
    const auto& e = in.extent();
    Volume out;
    out.spacing = target_spacing;
    out.unit = v.unit;
    out.data = Grid<float>(target_extent);

    // Per-axis lower index and weight, precomputed once.
    struct Tap {
        int i0;
        int i1;
        double w1;
    };
    std::array<std::vector<Tap>, 3> taps;
    for (int axis = 0; axis < 3; ++axis) {
        auto& t = taps[static_cast<std::size_t>(axis)];
        t.resize(static_cast<std::size_t>(target_extent[axis]));
        const int n = e[axis];
        for (int i = 0; i < target_extent[axis]; ++i) {
            double c = source_coord(i, target_spacing[static_cast<std::size_t>(axis)],
                                    v.spacing[static_cast<std::size_t>(axis)]);
            c = std::clamp(c, 0.0, static_cast<double>(n - 1));
            const int i0 = static_cast<int>(std::floor(c));
            const int i1 = std::min(i0 + 1, n - 1);
            t[static_cast<std::size_t>(i)] = {i0, i1, c - i0};
        }
    }

    for (int z = 0; z < target_extent.z; ++z) {
        const auto& tz = taps[2][static_cast<std::size_t>(z)];
        for (int y = 0; y < target_extent.y; ++y) {
            const auto& ty = taps[1][static_cast<std::size_t>(y)];
            for (int x = 0; x < target_extent.x; ++x) {
                const auto& tx = taps[0][static_cast<std::size_t>(x)];
                auto lerp_x = [&](int yy, int zz) {
                    const double a = in(tx.i0, yy, zz);
                    const double b = in(tx.i1, yy, zz);
                    // Written so that a == b returns a exactly.
                    return tx.w1 == 0.0 ? a : a + (b - a) * tx.w1;
                };
                auto lerp_y = [&](int zz) {
                    const double a = lerp_x(ty.i0, zz);
                    const double b = lerp_x(ty.i1, zz);
                    return ty.w1 == 0.0 ? a : a + (b - a) * ty.w1;
                };
                const double a = lerp_y(tz.i0);
                const double b = lerp_y(tz.i1);
                out.data(x, y, z) = static_cast<float>(tz.w1 == 0.0 ? a : a + (b - a) * tz.w1);
            }
        }
    }
    return out;
}

Grid<Label> resample_labels(const Grid<Label>& labels, const Spacing3& spacing,
                            const Spacing3& target_spacing, const Extent3& target_extent) {
    check_spacing(spacing);
    check_spacing(target_spacing);
    const auto& e = labels.extent();
    std::array<std::vector<int>, 3> nearest;
    for (int axis = 0; axis < 3; ++axis) {
        auto& n = nearest[static_cast<std::size_t>(axis)];
        n.resize(static_cast<std::size_t>(target_extent[axis]));
        for (int i = 0; i < target_extent[axis]; ++i) {
            const double c = source_coord(i, target_spacing[static_cast<std::size_t>(axis)],
                                          spacing[static_cast<std::size_t>(axis)]);
            n[static_cast<std::size_t>(i)] =
                std::clamp(static_cast<int>(std::floor(c + 0.5)), 0, e[axis] - 1);
        }
    }
    Grid<Label> out(target_extent);
    for (int z = 0; z < target_extent.z; ++z) {
        for (int y = 0; y < target_extent.y; ++y) {
            for (int x = 0; x < target_extent.x; ++x) {
                out(x, y, z) = labels(nearest[0][static_cast<std::size_t>(x)],
                                      nearest[1][static_cast<std::size_t>(y)],
                                      nearest[2][static_cast<std::size_t>(z)]);
            }
        }
    }
    return out;
}

std::pair<Volume, LabelMap> resample_isotropic(const Volume& v, const LabelMap& l,
                                               double target_spacing_mm) {
    check_spacing(v.spacing);
    if (!(target_spacing_mm > 0.0)) {
        throw Error(ErrorCode::InvalidInput, "target spacing must be positive");
    }
    if (!l.labels.empty()) require_same_extent(v.data, l.labels, "resample_isotropic");
    const Spacing3 target{target_spacing_mm, target_spacing_mm, target_spacing_mm};
    const Extent3 out_extent = resampled_extent(v.extent(), v.spacing, target_spacing_mm);
    Volume out_v = resample_image(v, target, out_extent);
    LabelMap out_l;
    out_l.names = l.names;
    if (!l.labels.empty()) {
        out_l.labels = resample_labels(l.labels, v.spacing, target, out_extent);
    }
    return {std::move(out_v), std::move(out_l)};
}

Volume normalize_intensity(const Volume& v, double clip_lo_hu, double clip_hi_hu) {
    if (!(clip_lo_hu < clip_hi_hu)) {
        throw Error(ErrorCode::InvalidInput, "normalization window requires lo < hi");
    }
    if (v.unit != IntensityUnit::RawHU) {
        throw Error(ErrorCode::InvalidInput, "volume is already normalized");
    }
    Volume out;
    out.spacing = v.spacing;
    out.unit = IntensityUnit::Normalized;
    out.data = Grid<float>(v.extent());
    const double range = clip_hi_hu - clip_lo_hu;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double x = v.data[i];
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::InvalidInput, "non-finite voxel value");
        }
        out.data[i] = static_cast<float>((std::clamp(x, clip_lo_hu, clip_hi_hu) - clip_lo_hu) / range);
    }
    return out;
}

Volume crop(const Volume& v, const PatchRef& p, float pad_value) {
    Volume out;
    out.spacing = v.spacing;
    out.unit = v.unit;
    out.data = crop(v.data, p, pad_value);
    return out;
}

Mask label_mask(const Grid<Label>& labels, int label_id) {
    Mask m(labels.extent());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        m[i] = labels[i] == label_id ? 1 : 0;
    }
    return m;
}

PatchRef clamp_window(PatchRef p, const Extent3& parent) {
    for (int axis = 0; axis < 3; ++axis) {
        if (parent[axis] >= p.size[axis]) {
            p.start[axis] = std::clamp(p.start[axis], 0, parent[axis] - p.size[axis]);
        } else {
            p.start[axis] = 0;
        }
    }
    return p;
}

PatchRef window_around(const Index3& center, const Extent3& size, const Extent3& parent) {
    PatchRef p;
    p.size = size;
    p.start = {center.x - size.x / 2, center.y - size.y / 2, center.z - size.z / 2};
    return clamp_window(p, parent);
}

PatchPair sample_patch_pair(const Volume& v, const LabelMap& l, int label_id, std::uint64_t rng_seed,
                            Extent3 patch_size) {
    require_same_extent(v.data, l.labels, "sample_patch_pair");
    std::int64_t count = 0;
    for (auto lab : l.labels.values()) count += lab == label_id;
    if (count == 0 || label_id <= 0) {
        throw Error(ErrorCode::NoForeground,
                    "label " + std::to_string(label_id) + " has no foreground voxels");
    }

    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::int64_t> pick(0, count - 1);
    std::int64_t target = pick(rng);
    Index3 anchor{};
    for (std::size_t i = 0; i < l.labels.size(); ++i) {
        if (l.labels[i] == label_id && target-- == 0) {
            anchor = l.labels.unravel(static_cast<std::int64_t>(i));
            break;
        }
    }

    const Extent3 parent = v.extent();
    auto deviated_window = [&]() {
        Index3 c = anchor;
        for (int axis = 0; axis < 3; ++axis) {
            const int half = patch_size[axis] / 2;
            std::uniform_int_distribution<int> off(-half, half);
            c[axis] += off(rng);
        }
        return window_around(c, patch_size, parent);
    };

    PatchPair pair;
    pair.anchor = anchor;
    pair.label_id = label_id;
    constexpr int kMaxRetries = 16;
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
        pair.u = deviated_window();
        pair.v = deviated_window();
        if (overlap_voxels(pair.u, pair.v) > 0) return pair;
    }
    pair.v = pair.u;
    return pair;
}

}  // namespace promptseg
