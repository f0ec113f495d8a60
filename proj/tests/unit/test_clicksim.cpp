#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "promptseg/clicksim.hpp"
#include "test_support.hpp"

using namespace promptseg;
using namespace promptseg::test;

TEST(DistanceTransform, AllTrueCubeCentre) {
    const Mask m(Extent3::cube(3), 1);
    const auto dt = distance_transform(m);
    EXPECT_DOUBLE_EQ(dt(1, 1, 1), 2.0);
    EXPECT_DOUBLE_EQ(dt(0, 0, 0), 1.0);
}

TEST(DistanceTransform, SingleVoxel) {
    Mask m(Extent3::cube(5));
    m(2, 3, 1) = 1;
    const auto dt = distance_transform(m);
    EXPECT_DOUBLE_EQ(dt(2, 3, 1), 1.0);
    EXPECT_DOUBLE_EQ(dt(0, 0, 0), 0.0);
}

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const Extent3 e = test::random_extent(rng, 1, 12);
        const Mask m = test::random_mask(rng, e, 0.3);
        const auto dt = distance_transform(m);
        for (int z = 0; z < e.z; ++z)
            for (int y = 0; y < e.y; ++y)
                for (int x = 0; x < e.x; ++x) {
                    const double expected =
                        m(x, y, z) ? std::sqrt(static_cast<double>(brute_sq_distance(m, {x, y, z}))) : 0.0;
                    ASSERT_EQ(dt(x, y, z), expected) << "trial " << trial;
                }
    }
}

TEST(SquaredDistance, AnisotropicSpacingMatchesBruteForce) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Extent3 e = test::random_extent(rng, 1, 9);
        const Mask seeds = test::random_mask(rng, e, 0.05);
        const Spacing3 sp{1.5, 0.75, 2.0};
        const auto d2 = squared_distance_to(seeds, sp);
        for (int z = 0; z < e.z; ++z)
            for (int y = 0; y < e.y; ++y)
                for (int x = 0; x < e.x; ++x) {
                    double best = std::numeric_limits<double>::infinity();
                    for (std::size_t i = 0; i < seeds.size(); ++i) {
                        if (!seeds[i]) continue;
                        const Index3 q = seeds.unravel(static_cast<std::int64_t>(i));
                        const double dx = (q.x - x) * sp[0], dy = (q.y - y) * sp[1], dz = (q.z - z) * sp[2];
                        best = std::min(best, dx * dx + dy * dy + dz * dz);
                    }
                    if (std::isinf(best)) {
                        ASSERT_TRUE(std::isinf(d2(x, y, z)));
                    } else {
                        ASSERT_NEAR(d2(x, y, z), best, 1e-9 * (1 + best));
                    }
                }
    }
}

TEST(FirstClick, SingleVoxelAndDeterminism) {
    Mask gt(Extent3::cube(9));
    gt(4, 1, 7) = 1;
    const auto c = first_click(gt, 123);
    EXPECT_EQ(c.position, (Index3{4, 1, 7}));
    EXPECT_EQ(c.polarity, Polarity::Positive);

    std::mt19937_64 rng(1);
    const Mask big = test::random_mask(rng, Extent3::cube(10), 0.3);
    EXPECT_EQ(first_click(big, 77), first_click(big, 77));
}

TEST(FirstClick, UniformOverForeground) {
    Mask gt(Extent3::cube(4));
    gt(0, 0, 0) = 1;
    gt(3, 2, 1) = 1;
    const int draws = 100000;
    int first = 0;
    for (int s = 0; s < draws; ++s) first += first_click(gt, static_cast<std::uint64_t>(s)).position == Index3{0, 0, 0};
    EXPECT_NEAR(static_cast<double>(first) / draws, 0.5, 0.01);
}

TEST(FirstClick, EmptyIsNoForeground) {
    try {
        first_click(Mask(Extent3::cube(3)), 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoForeground);
    }
}

TEST(NextClick, CubeMissedEntirely) {
    const Mask gt = test::cube_mask(Extent3::cube(11), {3, 3, 3}, 5);
    const auto c = next_click(gt, Mask(gt.extent()));
    ASSERT_TRUE(c);
    EXPECT_EQ(c->position, (Index3{5, 5, 5}));
    EXPECT_EQ(c->polarity, Polarity::Positive);
}

TEST(NextClick, SpuriousCube) {
    const Mask pred = test::cube_mask(Extent3::cube(9), {2, 4, 3}, 3);
    const auto c = next_click(Mask(pred.extent()), pred);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->position, (Index3{3, 5, 4}));
    EXPECT_EQ(c->polarity, Polarity::Negative);
}

TEST(NextClick, ConvergedIsNullopt) {
    std::mt19937_64 rng(4);
    const Mask m = test::random_mask(rng, Extent3::cube(6));
    EXPECT_FALSE(next_click(m, m));
    EXPECT_FALSE(next_click(m, m, ErrorSelection::ByComponent));
}

TEST(NextClick, TieGoesToLexicographicallySmallest) {
    // Two identical isolated error voxels: the one with smaller x wins regardless of memory order.
    Mask gt(Extent3{6, 6, 6});
    gt(4, 0, 0) = 1;
    gt(1, 5, 5) = 1;
    const auto c = next_click(gt, Mask(gt.extent()));
    ASSERT_TRUE(c);
    EXPECT_EQ(c->position, (Index3{1, 5, 5}));
}

TEST(NextClick, EqualErrorSizesPreferFalseNegative) {
    Mask gt(Extent3::cube(6)), pred(Extent3::cube(6));
    gt(1, 1, 1) = 1;
    pred(4, 4, 4) = 1;
    const auto c = next_click(gt, pred);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->polarity, Polarity::Positive);
    EXPECT_EQ(c->position, (Index3{1, 1, 1}));
}

TEST(NextClick, MatchesExhaustiveOracle) {
    std::mt19937_64 rng(31337);
    int compared = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Extent3 e = test::random_extent(rng, 2, 16);
        const Mask gt = test::random_mask(rng, e, 0.05);
        Mask pred = gt;
        // Perturb the prediction: erase a box, add specks.
        const Mask noise = test::random_mask(rng, e, 0.03);
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = (pred[i] != 0) != (noise[i] != 0);
        const auto got = next_click(gt, pred);
        const auto want = oracle_next_click(gt, pred);
        ASSERT_EQ(got.has_value(), want.has_value()) << "trial " << trial;
        if (got) {
            ASSERT_EQ(got->position, want->position) << "trial " << trial;
            ASSERT_EQ(got->polarity, want->polarity) << "trial " << trial;
            ++compared;
        }
    }
    EXPECT_GT(compared, 90);
}

TEST(NextClick, ComponentSelectionPicksLargestComponent) {
    // Many scattered false-negative specks outnumber one false-positive blob in total, but
    // the blob is the largest single component.
    Mask gt(Extent3::cube(12)), pred(Extent3::cube(12));
    for (int i = 0; i < 12; i += 2)
        for (int j = 0; j < 12; j += 2) gt(i, 11, j) = 1;
    const Mask blob = test::cube_mask(pred.extent(), {4, 4, 4}, 3);
    pred = blob;
    const auto by_class = next_click(gt, pred, ErrorSelection::ByClass);
    const auto by_comp = next_click(gt, pred, ErrorSelection::ByComponent);
    ASSERT_TRUE(by_class && by_comp);
    EXPECT_EQ(by_class->polarity, Polarity::Positive);
    EXPECT_EQ(by_comp->polarity, Polarity::Negative);
    EXPECT_EQ(by_comp->position, (Index3{5, 5, 5}));
}

TEST(ConnectedComponents, CountsSixConnectivity) {
    Mask m(Extent3::cube(4));
    m(0, 0, 0) = 1;
    m(1, 1, 0) = 1;  // diagonal only: separate component
    m(3, 3, 3) = 1;
    m(3, 3, 2) = 1;
    auto [ids, n] = connected_components(m);
    EXPECT_EQ(n, 3);
    EXPECT_EQ(ids(3, 3, 3), ids(3, 3, 2));
    EXPECT_NE(ids(0, 0, 0), ids(1, 1, 0));
}
