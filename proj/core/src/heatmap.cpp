#include "promptseg/heatmap.hpp"

#include <cmath>
#include <limits>

namespace promptseg {

std::optional<Index3> centroid_anchor(const Mask& gt) {
    const auto& e = gt.extent();
    double sx = 0, sy = 0, sz = 0;
    std::int64_t n = 0;
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x)
                if (gt(x, y, z)) {
                    sx += x;
                    sy += y;
                    sz += z;
                    ++n;
                }
    if (n == 0) return std::nullopt;

    const Index3 c{static_cast<int>(std::lround(sx / n)), static_cast<int>(std::lround(sy / n)),
                   static_cast<int>(std::lround(sz / n))};
    if (gt(c)) return c;

    // Nearest foreground voxel; scanning x outermost keeps the lexicographic tie rule.
    Index3 best{};
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int x = 0; x < e.x; ++x)
        for (int y = 0; y < e.y; ++y)
            for (int z = 0; z < e.z; ++z) {
                if (!gt(x, y, z)) continue;
                const double d2 = double(x - c.x) * (x - c.x) + double(y - c.y) * (y - c.y) +
                                  double(z - c.z) * (z - c.z);
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = {x, y, z};
                }
            }
    return best;
}

Grid<float> make_centroid_heatmap(const Mask& gt, double sigma_vox) {
    Grid<float> h(gt.extent());
    if (const auto a = centroid_anchor(gt)) splat_gaussian(h, *a, sigma_vox);
    return h;
}

}  // namespace promptseg
