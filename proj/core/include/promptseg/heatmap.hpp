#pragma once

#include <optional>

#include "promptseg/grid.hpp"
#include "promptseg/prompts.hpp"

namespace promptseg {

/// Voxel that anchors the centroid heatmap: the rounded foreground centroid, or the
/// foreground voxel nearest to it when the rounded centroid is background. Ties between
/// equally near voxels go to the lexicographically smallest (x, y, z). nullopt when empty.
std::optional<Index3> centroid_anchor(const Mask& gt);

/// Truncated Gaussian (same profile as a rendered click) at centroid_anchor(gt); all zero
/// when gt has no foreground.
Grid<float> make_centroid_heatmap(const Mask& gt, double sigma_vox = kDefaultPromptSigmaVox);

}  // namespace promptseg
