#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "promptseg/grid.hpp"

namespace promptseg {

enum class IntensityUnit { RawHU, Normalized };

/// Scalar image on an axis-aligned grid with physical voxel spacing in millimeters.
struct Volume {
    Grid<float> data;
    Spacing3 spacing{1.0, 1.0, 1.0};
    IntensityUnit unit = IntensityUnit::RawHU;

    const Extent3& extent() const { return data.extent(); }
};

using Label = std::uint16_t;

/// Integer label map sharing a Volume's grid. Label 0 is background.
struct LabelMap {
    Grid<Label> labels;
    std::map<int, std::string> names;

    const Extent3& extent() const { return labels.extent(); }
};

/// Voxel window into a parent grid. `start` may be negative only for padded crops.
struct PatchRef {
    Index3 start{};
    Extent3 size = Extent3::cube(64);

    Index3 center() const {
        return {start.x + size.x / 2, start.y + size.y / 2, start.z + size.z / 2};
    }
    bool contains(const Index3& p) const {
        return p.x >= start.x && p.y >= start.y && p.z >= start.z && p.x < start.x + size.x &&
               p.y < start.y + size.y && p.z < start.z + size.z;
    }
    Index3 to_local(const Index3& global) const {
        return {global.x - start.x, global.y - start.y, global.z - start.z};
    }
    Index3 to_global(const Index3& local) const {
        return {local.x + start.x, local.y + start.y, local.z + start.z};
    }

    friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

/// Number of voxels shared by two windows.
std::int64_t overlap_voxels(const PatchRef& a, const PatchRef& b);

/// Two overlapping training windows sampled around one foreground anchor.
struct PatchPair {
    PatchRef u;
    PatchRef v;
    Index3 anchor{};
    int label_id = 0;
};

/// Default HU window applied before scaling to [0, 1].
inline constexpr double kDefaultClipLoHU = -1024.0;
inline constexpr double kDefaultClipHiHU = 2048.0;

/// Resamples onto an isotropic grid. Image uses trilinear interpolation, labels nearest neighbour.
/// Output shape is round(shape * spacing / target) per axis, at least 1. Output voxel i samples
/// the input at continuous index (i + 0.5) * target / spacing - 0.5, clamped to the grid.
std::pair<Volume, LabelMap> resample_isotropic(const Volume& v, const LabelMap& l,
                                               double target_spacing_mm);
Volume resample_image(const Volume& v, const Spacing3& target_spacing, const Extent3& target_extent);
Grid<Label> resample_labels(const Grid<Label>& labels, const Spacing3& spacing,
                            const Spacing3& target_spacing, const Extent3& target_extent);
Extent3 resampled_extent(const Extent3& extent, const Spacing3& spacing, double target_spacing_mm);

/// (clamp(x, lo, hi) - lo) / (hi - lo).
Volume normalize_intensity(const Volume& v, double clip_lo_hu = kDefaultClipLoHU,
                           double clip_hi_hu = kDefaultClipHiHU);

/// Windowed copy. Voxels outside the parent grid take `pad_value`; the result has extent p.size.
template <class T>
Grid<T> crop(const Grid<T>& src, const PatchRef& p, T pad_value) {
    Grid<T> out(p.size, pad_value);
    const auto& e = src.extent();
    for (int z = 0; z < p.size.z; ++z) {
        const int gz = p.start.z + z;
        if (gz < 0 || gz >= e.z) continue;
        for (int y = 0; y < p.size.y; ++y) {
            const int gy = p.start.y + y;
            if (gy < 0 || gy >= e.y) continue;
            for (int x = 0; x < p.size.x; ++x) {
                const int gx = p.start.x + x;
                if (gx < 0 || gx >= e.x) continue;
                out(x, y, z) = src(gx, gy, gz);
            }
        }
    }
    return out;
}

Volume crop(const Volume& v, const PatchRef& p, float pad_value = 0.0f);

/// Writes `patch` back into `dst` at window p, skipping voxels outside dst.
template <class T>
void paste(Grid<T>& dst, const PatchRef& p, const Grid<T>& patch) {
    if (!(patch.extent() == p.size)) throw Error(ErrorCode::ShapeMismatch, "paste: patch does not match window");
    const auto& e = dst.extent();
    for (int z = 0; z < p.size.z; ++z) {
        const int gz = p.start.z + z;
        if (gz < 0 || gz >= e.z) continue;
        for (int y = 0; y < p.size.y; ++y) {
            const int gy = p.start.y + y;
            if (gy < 0 || gy >= e.y) continue;
            for (int x = 0; x < p.size.x; ++x) {
                const int gx = p.start.x + x;
                if (gx < 0 || gx >= e.x) continue;
                dst(gx, gy, gz) = patch(x, y, z);
            }
        }
    }
}

/// Binary mask of one label.
Mask label_mask(const Grid<Label>& labels, int label_id);

/// Shifts a window so it lies inside `parent` on every axis where the parent is at least as
/// large as the window. Axes where the parent is smaller start at 0 and are padded on crop.
PatchRef clamp_window(PatchRef p, const Extent3& parent);

/// Window of `size` centred on `center`, then clamped into `parent`.
PatchRef window_around(const Index3& center, const Extent3& size, const Extent3& parent);

/// Samples the overlapping U/V training windows for one label.
PatchPair sample_patch_pair(const Volume& v, const LabelMap& l, int label_id, std::uint64_t rng_seed,
                            Extent3 patch_size = Extent3::cube(64));

}  // namespace promptseg
