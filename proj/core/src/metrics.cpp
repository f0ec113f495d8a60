#include "promptseg/metrics.hpp"

#include "promptseg/clicksim.hpp"

namespace promptseg {

double dsc(const Mask& pred, const Mask& gt) {
    require_same_extent(pred, gt, "dsc");
    std::int64_t inter = 0;
    std::int64_t np = 0;
    std::int64_t ng = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] != 0;
        const bool b = gt[i] != 0;
        np += a;
        ng += b;
        inter += a && b;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

Mask boundary(const Mask& m) {
    const auto& e = m.extent();
    Mask out(e);
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x) {
                if (!m(x, y, z)) continue;
                const bool edge = x == 0 || y == 0 || z == 0 || x == e.x - 1 || y == e.y - 1 ||
                                  z == e.z - 1 || !m(x - 1, y, z) || !m(x + 1, y, z) ||
                                  !m(x, y - 1, z) || !m(x, y + 1, z) || !m(x, y, z - 1) ||
                                  !m(x, y, z + 1);
                out(x, y, z) = edge;
            }
    return out;
}

double nsd(const Mask& pred, const Mask& gt, const Spacing3& spacing, double tolerance_mm) {
    require_same_extent(pred, gt, "nsd");
    if (tolerance_mm < 0) throw Error(ErrorCode::InvalidInput, "nsd tolerance must be non-negative");
    const Mask bp = boundary(pred);
    const Mask bg = boundary(gt);
    const auto np = count_true(bp);
    const auto ng = count_true(bg);
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;

    const auto to_gt = squared_distance_to(bg, spacing);
    const auto to_pred = squared_distance_to(bp, spacing);
    const double tol2 = tolerance_mm * tolerance_mm;
    std::int64_t within = 0;
    for (std::size_t i = 0; i < bp.size(); ++i) {
        if (bp[i] && to_gt[i] <= tol2) ++within;
        if (bg[i] && to_pred[i] <= tol2) ++within;
    }
    return static_cast<double>(within) / static_cast<double>(np + ng);
}

}  // namespace promptseg
