#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptseg/grid.hpp"

namespace promptseg {

enum class Polarity { Positive, Negative };

std::string_view polarity_name(Polarity p);
Polarity parse_polarity(std::string_view s);

struct Click {
    Index3 position{};
    Polarity polarity = Polarity::Positive;

    friend bool operator==(const Click&, const Click&) = default;
};

/// Click heatmap width used when nothing else is configured.
inline constexpr double kDefaultPromptSigmaVox = 2.0;

/// Positive clicks (P), negative clicks (N) and the previous prediction (Y) on the patch grid.
struct PromptMaps {
    Grid<float> p_map;
    Grid<float> n_map;
    Grid<float> y_map;

    const Extent3& extent() const { return p_map.extent(); }
};

/// Channel-stacked [P, N, Y] map; channel c occupies values()[c * voxels, (c + 1) * voxels).
struct CompositeMap {
    Extent3 extent{};
    std::vector<float> values;

    std::size_t voxels() const { return static_cast<std::size_t>(extent.voxels()); }
    std::span<const float> channel(int c) const {
        return std::span<const float>(values).subspan(static_cast<std::size_t>(c) * voxels(), voxels());
    }
};

/// Adds exp(-|x - v|^2 / (2 sigma^2)), cut to zero beyond 3 sigma, into the channel of each
/// click's polarity. Overlapping clicks combine by voxel-wise maximum. y_map is all zero.
PromptMaps render_clicks(std::span<const Click> clicks, const Extent3& patch_size,
                         double sigma_vox = kDefaultPromptSigmaVox);

/// Single truncated Gaussian bump, the building block of render_clicks.
void splat_gaussian(Grid<float>& map, const Index3& center, double sigma_vox);

CompositeMap compose(const Grid<float>& p_map, const Grid<float>& n_map, const Grid<float>& y_map);
CompositeMap compose(const PromptMaps& maps);
PromptMaps split(const CompositeMap& m);

/// Fixed random Fourier projection with per-polarity embeddings: encoding length is 2m.
struct RFFEncoder {
    int m = 64;
    int d = 3;
    std::vector<double> b;       // m x d, row-major, rows b_j
    std::vector<double> e_pos;   // 2m
    std::vector<double> e_neg;   // 2m

    /// Rows of B drawn from N(0, scale^2 I); embeddings start at zero.
    static RFFEncoder create(int m, std::uint64_t rng_seed, double scale = 1.0, int d = 3);
};

/// Maps a patch-local voxel to [-1, 1]^3: (2 (p + 0.5) / size) - 1 per axis.
std::array<double, 3> normalize_position(const Index3& p, const Extent3& patch_size);

/// [cos(2 pi b_1.v), sin(2 pi b_1.v), ..., cos(2 pi b_m.v), sin(2 pi b_m.v)] + e_polarity.
std::vector<double> rff_encode(const RFFEncoder& enc, std::span<const double> v, Polarity polarity);

/// `x y z polarity` per line.
std::string format_clicks(std::span<const Click> clicks);
std::vector<Click> parse_clicks(std::string_view text);

}  // namespace promptseg
