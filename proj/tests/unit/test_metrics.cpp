#include <gtest/gtest.h>

#include <random>

#include "promptseg/metrics.hpp"
#include "test_support.hpp"

using namespace promptseg;
using namespace promptseg::test;

TEST(Dsc, Examples) {
    const Mask a = test::cube_mask(Extent3::cube(8), {1, 1, 1}, 3);
    EXPECT_EQ(dsc(a, a), 1.0);
    EXPECT_EQ(dsc(a, test::cube_mask(Extent3::cube(8), {5, 5, 5}, 3)), 0.0);
    Mask gt(Extent3::cube(3)), pred(Extent3::cube(3));
    gt(0, 0, 0) = gt(2, 2, 2) = 1;
    pred(0, 0, 0) = 1;
    EXPECT_DOUBLE_EQ(dsc(pred, gt), 2.0 / 3.0);
    EXPECT_EQ(dsc(Mask(Extent3::cube(2)), Mask(Extent3::cube(2))), 1.0);
    EXPECT_THROW(dsc(gt, Mask(Extent3::cube(2))), Error);
}

TEST(Nsd, IdenticalAndShiftedAndFar) {
    const Extent3 e = Extent3::cube(20);
    const Spacing3 sp{1.5, 1.5, 1.5};
    const Mask a = test::cube_mask(e, {4, 4, 4}, 6);
    EXPECT_EQ(nsd(a, a, sp, 5.0), 1.0);
    const Mask shifted = test::cube_mask(e, {5, 4, 4}, 6);
    EXPECT_EQ(nsd(shifted, a, sp, 5.0), 1.0);
    EXPECT_EQ(brute_nsd(shifted, a, sp, 5.0), 1.0);
    const Mask x = test::cube_mask(e, {0, 0, 0}, 2);
    const Mask y = test::cube_mask(e, {17, 17, 17}, 2);
    EXPECT_EQ(nsd(x, y, sp, 5.0), 0.0);
    EXPECT_EQ(brute_nsd(x, y, sp, 5.0), 0.0);
}

TEST(Nsd, EmptyConventions) {
    const Extent3 e = Extent3::cube(5);
    EXPECT_EQ(nsd(Mask(e), Mask(e), {1, 1, 1}), 1.0);
    EXPECT_EQ(nsd(test::cube_mask(e, {1, 1, 1}, 2), Mask(e), {1, 1, 1}), 0.0);
    EXPECT_THROW(nsd(Mask(e), Mask(e), {1, 1, 1}, -1.0), Error);
}

TEST(Metrics, MatchBruteForceOnRandomMasks) {
    std::mt19937_64 rng(99);
    const std::vector<double> tolerances{0.0, 1.0, 1.5, 2.2, 3.0, 5.0, 8.0};
    for (int trial = 0; trial < 100; ++trial) {
        const Extent3 e = test::random_extent(rng, 1, 16);
        const Mask a = test::random_mask(rng, e, 0.04);
        const Mask b = test::random_mask(rng, e, 0.04);
        std::uniform_real_distribution<double> s(0.5, 2.5);
        const Spacing3 sp{s(rng), s(rng), s(rng)};
        ASSERT_EQ(dsc(a, b), brute_dsc(a, b));
        double prev = -1;
        for (double tol : tolerances) {
            const double got = nsd(a, b, sp, tol);
            ASSERT_NEAR(got, brute_nsd(a, b, sp, tol), 1e-9) << "trial " << trial << " tol " << tol;
            ASSERT_GE(got, prev);
            prev = got;
        }
    }
}

TEST(Boundary, InteriorVoxelsExcluded) {
    const Mask m = test::cube_mask(Extent3::cube(7), {1, 1, 1}, 5);
    const Mask b = boundary(m);
    EXPECT_EQ(count_true(b), 125 - 27);
    EXPECT_FALSE(b(3, 3, 3));
}
