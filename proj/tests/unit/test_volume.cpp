#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "promptseg/kv_config.hpp"
#include "promptseg/phantom.hpp"
#include "promptseg/volume.hpp"
#include "test_support.hpp"

using namespace promptseg;

namespace {

Volume ramp_volume(const Extent3& e, const Spacing3& spacing = {1.0, 1.0, 1.0}) {
    Volume v;
    v.spacing = spacing;
    v.data = Grid<float>(e);
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x) v.data(x, y, z) = static_cast<float>(x + 100 * y + 10000 * z);
    return v;
}

}  // namespace

TEST(Grid, LinearAndUnravelAreInverse) {
    Grid<int> g({5, 3, 4});
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.size()); ++i) {
        EXPECT_EQ(g.linear(g.unravel(i)), i);
    }
    EXPECT_EQ(g.linear(1, 0, 0), 1);
    EXPECT_EQ(g.linear(0, 1, 0), 5);
    EXPECT_EQ(g.linear(0, 0, 1), 15);
}

TEST(Grid, RejectsMismatchedData) {
    EXPECT_THROW(Grid<float>(Extent3{2, 2, 2}, std::vector<float>(7)), Error);
}

TEST(Resample, SameSpacingIsIdentity) {
    std::mt19937_64 rng(3);
    Volume v = ramp_volume({7, 6, 5}, {1.5, 1.5, 1.5});
    LabelMap l;
    l.labels = Grid<Label>(v.extent());
    for (auto& x : l.labels.values()) x = static_cast<Label>(rng() % 4);
    auto [rv, rl] = resample_isotropic(v, l, 1.5);
    EXPECT_EQ(rv.data, v.data);
    EXPECT_EQ(rl.labels, l.labels);
}

TEST(Resample, HalvingSpacingDoublesShape) {
    Volume v = ramp_volume({10, 10, 10}, {3.0, 3.0, 3.0});
    LabelMap l;
    l.labels = Grid<Label>(v.extent(), 1);
    auto [rv, rl] = resample_isotropic(v, l, 1.5);
    EXPECT_EQ(rv.extent(), (Extent3{20, 20, 20}));
    EXPECT_EQ(rl.extent(), (Extent3{20, 20, 20}));
    for (double s : rv.spacing) EXPECT_EQ(s, 1.5);
}

TEST(Resample, ConstantStaysConstant) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Extent3 e = test::random_extent(rng, 2, 9);
        std::uniform_real_distribution<double> sp(0.4, 4.0);
        Volume v;
        v.spacing = {sp(rng), sp(rng), sp(rng)};
        const float c = static_cast<float>(sp(rng) * 37.0 - 50.0);
        v.data = Grid<float>(e, c);
        auto [rv, rl] = resample_isotropic(v, LabelMap{}, sp(rng));
        for (float x : rv.data.values()) ASSERT_EQ(x, c);
    }
}

TEST(Resample, RejectsBadSpacing) {
    Volume v = ramp_volume({3, 3, 3}, {0.0, 1.0, 1.0});
    EXPECT_THROW(resample_isotropic(v, LabelMap{}, 1.5), Error);
    Volume w = ramp_volume({3, 3, 3});
    EXPECT_THROW(resample_isotropic(w, LabelMap{}, -1.0), Error);
}

TEST(Normalize, EndpointsMidpointAndClamp) {
    Volume v;
    v.data = Grid<float>({5, 1, 1});
    v.data[0] = -1024.0f;
    v.data[1] = 2048.0f;
    v.data[2] = 512.0f;
    v.data[3] = -1524.0f;
    v.data[4] = 5000.0f;
    const Volume n = normalize_intensity(v, -1024.0, 2048.0);
    EXPECT_EQ(n.data[0], 0.0f);
    EXPECT_EQ(n.data[1], 1.0f);
    EXPECT_EQ(n.data[2], 0.5f);
    EXPECT_EQ(n.data[3], 0.0f);
    EXPECT_EQ(n.data[4], 1.0f);
    EXPECT_EQ(n.unit, IntensityUnit::Normalized);
}

TEST(Normalize, RejectsEmptyWindowAndNaN) {
    Volume v;
    v.data = Grid<float>({1, 1, 1}, 0.0f);
    EXPECT_THROW(normalize_intensity(v, 5.0, 5.0), Error);
    v.data[0] = std::nanf("");
    EXPECT_THROW(normalize_intensity(v), Error);
}

TEST(Crop, InteriorWindowIsSubArray) {
    const Volume v = ramp_volume({10, 9, 8});
    const PatchRef p{{2, 3, 1}, {4, 5, 6}};
    const auto c = crop(v.data, p, -1.0f);
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 4; ++x) ASSERT_EQ(c(x, y, z), v.data(x + 2, y + 3, z + 1));
}

TEST(Crop, OutsideWindowIsPad) {
    const Volume v = ramp_volume({4, 4, 4});
    const auto c = crop(v.data, PatchRef{{10, -20, 3}, {3, 3, 3}}, -7.0f);
    for (float x : c.values()) EXPECT_EQ(x, -7.0f);
}

TEST(Crop, OverhangingWindowMatchesIndexArithmetic) {
    const Extent3 e{6, 7, 5};
    const Volume v = ramp_volume(e);
    const PatchRef p{{-3, 4, -2}, {6, 6, 6}};
    const auto c = crop(v.data, p, -1.0f);
    ASSERT_EQ(c.extent(), p.size);
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                const int gx = x - 3, gy = y + 4, gz = z - 2;
                const bool inside = gx >= 0 && gy >= 0 && gz >= 0 && gx < e.x && gy < e.y && gz < e.z;
                const float expected = inside ? static_cast<float>(gx + 100 * gy + 10000 * gz) : -1.0f;
                ASSERT_EQ(c(x, y, z), expected) << x << "," << y << "," << z;
            }
}

TEST(Crop, PasteInvertsCrop) {
    Volume v = ramp_volume({8, 8, 8});
    const PatchRef p{{-2, 3, 5}, {5, 5, 5}};
    auto c = crop(v.data, p, 0.0f);
    Grid<float> dst(v.extent(), 0.0f);
    paste(dst, p, c);
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                EXPECT_EQ(dst(x, y, z), p.contains({x, y, z}) ? v.data(x, y, z) : 0.0f);
    EXPECT_THROW(paste(dst, PatchRef{{0, 0, 0}, {2, 2, 2}}, c), Error);
}

TEST(Window, ClampAndCentre) {
    const Extent3 parent{64, 64, 64};
    const auto w = window_around({32, 32, 32}, Extent3::cube(32), parent);
    EXPECT_EQ(w.start, (Index3{16, 16, 16}));
    const auto corner = window_around({0, 63, 0}, Extent3::cube(32), parent);
    EXPECT_EQ(corner.start, (Index3{0, 32, 0}));
    const auto small = window_around({2, 2, 2}, Extent3::cube(32), Extent3{5, 64, 64});
    EXPECT_EQ(small.start.x, 0);
}

TEST(PatchPair, SingleVoxelAnchor) {
    Volume v;
    v.data = Grid<float>(Extent3::cube(40), 0.0f);
    LabelMap l;
    l.labels = Grid<Label>(v.extent(), 0);
    l.labels(11, 27, 5) = 3;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto pair = sample_patch_pair(v, l, 3, s, Extent3::cube(16));
        EXPECT_EQ(pair.anchor, (Index3{11, 27, 5}));
        EXPECT_EQ(pair.label_id, 3);
    }
}

TEST(PatchPair, Deterministic) {
    const auto spec = random_phantom_spec(4);
    auto [v, l] = make_phantom(spec, 4);
    const auto a = sample_patch_pair(v, l, 1, 99, Extent3::cube(32));
    const auto b = sample_patch_pair(v, l, 1, 99, Extent3::cube(32));
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.v, b.v);
    EXPECT_EQ(a.anchor, b.anchor);
}

TEST(PatchPair, TenThousandPairsOverlapAndStayClose) {
    const auto spec = random_phantom_spec(21);
    auto [v, l] = make_phantom(spec, 21);
    const Extent3 patch = Extent3::cube(32);
    int label = 0;
    for (auto x : l.labels.values())
        if (x != 0) label = x;
    ASSERT_GT(label, 0);
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const auto pair = sample_patch_pair(v, l, label, s, patch);
        ASSERT_GT(overlap_voxels(pair.u, pair.v), 0);
        for (int a = 0; a < 3; ++a) {
            ASSERT_LE(std::abs(pair.u.center()[a] - pair.v.center()[a]), patch[a]);
            ASSERT_GE(pair.u.start[a], 0);
            ASSERT_LE(pair.u.start[a] + patch[a], v.extent()[a]);
            ASSERT_GE(pair.v.start[a], 0);
            ASSERT_LE(pair.v.start[a] + patch[a], v.extent()[a]);
        }
        ASSERT_EQ(l.labels(pair.anchor), label);
    }
}

TEST(PatchPair, MissingLabelIsNoForeground) {
    Volume v;
    v.data = Grid<float>(Extent3::cube(8), 0.0f);
    LabelMap l;
    l.labels = Grid<Label>(v.extent(), 0);
    try {
        sample_patch_pair(v, l, 1, 0, Extent3::cube(4));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoForeground);
    }
}

TEST(KeyValueConfig, ParseCommentsRepeatsAndLists) {
    const auto kv = KeyValueConfig::parse("# comment\nlr = 0.5\nname = a b  # trailing\nlr=0.25\nxs = 1, 2 3\n");
    EXPECT_DOUBLE_EQ(kv.get_double("lr", 0), 0.25);
    EXPECT_EQ(kv.get_all("lr").size(), 2u);
    EXPECT_EQ(kv.get("name"), "a b");
    EXPECT_EQ(kv.get_ints("xs"), (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(kv.get_or("missing", "z"), "z");
    EXPECT_FALSE(kv.has("missing"));
    const auto back = KeyValueConfig::parse(kv.to_string());
    EXPECT_EQ(back.entries(), kv.entries());
}

TEST(KeyValueConfig, BadNumberIsParseError) {
    const auto kv = KeyValueConfig::parse("lr = fast\n");
    try {
        kv.get_double("lr", 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Parse);
    }
    EXPECT_THROW(KeyValueConfig::parse("no equals sign here\n"), Error);
}
