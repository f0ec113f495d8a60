#pragma once

#include <cstdint>
#include <optional>

#include "promptseg/grid.hpp"
#include "promptseg/prompts.hpp"

namespace promptseg {

struct ErrorRegion {
    Mask false_neg;  // gt and not pred
    Mask false_pos;  // pred and not gt
};

ErrorRegion error_region(const Mask& gt, const Mask& pred);

/// Exact Euclidean distance (voxel units) from each region voxel to the nearest voxel outside
/// the region; 0 outside. Voxels beyond the grid count as outside the region.
Grid<double> distance_transform(const Mask& region);

/// Squared Euclidean distance in millimeters from every voxel to the nearest voxel with
/// `seeds` set (infinity when there are none). Voxels outside the grid are not seeds.
Grid<double> squared_distance_to(const Mask& seeds, const Spacing3& spacing);

/// Uniformly random foreground voxel as a positive click.
Click first_click(const Mask& gt, std::uint64_t rng_seed);

enum class ErrorSelection {
    /// Larger of the false-negative / false-positive sets by voxel count.
    ByClass,
    /// Largest 6-connected error component.
    ByComponent,
};

/// Refinement click at the error voxel farthest from its region boundary. Ties prefer the
/// false-negative region and then the lexicographically smallest (x, y, z). Returns nullopt
/// when pred == gt (converged).
std::optional<Click> next_click(const Mask& gt, const Mask& pred,
                                ErrorSelection selection = ErrorSelection::ByClass);

/// Index with the largest value among voxels where `where` is set; ties go to the
/// lexicographically smallest (x, y, z). nullopt when `where` is empty.
std::optional<Index3> argmax_lexicographic(const Grid<double>& values, const Mask& where);

/// 6-connected components; returns per-voxel component ids (0 = not in mask) and the count.
std::pair<Grid<int>, int> connected_components(const Mask& m);

}  // namespace promptseg
