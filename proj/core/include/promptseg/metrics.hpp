#pragma once

#include "promptseg/grid.hpp"

namespace promptseg {

/// Tolerance used for NSD unless configured otherwise, in millimeters.
inline constexpr double kDefaultNsdToleranceMm = 5.0;

/// 2|A and B| / (|A| + |B|); 1.0 when both masks are empty.
double dsc(const Mask& pred, const Mask& gt);

/// Foreground voxels with at least one face-adjacent background or out-of-grid neighbour.
Mask boundary(const Mask& m);

/// Normalized surface distance: the fraction of boundary voxels of both masks whose
/// voxel-centre distance (mm) to the other mask's boundary is within tolerance.
/// Both empty gives 1.0, exactly one empty gives 0.0.
double nsd(const Mask& pred, const Mask& gt, const Spacing3& spacing_mm,
           double tolerance_mm = kDefaultNsdToleranceMm);

}  // namespace promptseg
