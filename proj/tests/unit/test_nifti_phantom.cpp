#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "promptseg/dataset.hpp"
#include "promptseg/nifti.hpp"
#include "promptseg/phantom.hpp"
#include "test_support.hpp"

using namespace promptseg;

namespace {

Grid<float> numbered(const Extent3& e) {
    Grid<float> g(e);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(i);
    return g;
}

void put_float(std::string& buf, std::size_t off, float v) { std::memcpy(buf.data() + off, &v, 4); }

}  // namespace

TEST(Nifti, RoundTripsEveryWrittenType) {
    const Grid<float> g = numbered({4, 3, 5});
    for (auto type : {nifti::DataType::UInt8, nifti::DataType::Int16, nifti::DataType::Float32}) {
        const auto img = nifti::decode(nifti::encode(g, {0.5, 1.25, 3.0}, type));
        EXPECT_EQ(img.data, g);
        EXPECT_EQ(img.spacing, (Spacing3{0.5, 1.25, 3.0}));
        EXPECT_TRUE(img.orientation.is_identity());
    }
}

TEST(Nifti, GzipIsTransparent) {
    const Grid<float> g = numbered({6, 2, 2});
    const std::string raw = nifti::encode(g, {1, 1, 1}, nifti::DataType::Float32);
    const std::string gz = nifti::gzip(raw);
    EXPECT_NE(gz, raw);
    EXPECT_EQ(nifti::gunzip_if_needed(gz), raw);
    EXPECT_EQ(nifti::decode(gz).data, g);
}

TEST(Nifti, FlippedDirectionIsCanonicalizedAndRestored) {
    const Extent3 e{4, 3, 2};
    const Grid<float> g = numbered(e);
    std::string bytes = nifti::encode(g, {2.0, 1.0, 1.0}, nifti::DataType::Float32);
    put_float(bytes, 280, -2.0f);  // srow_x[0]: x runs towards decreasing world coordinate
    const auto img = nifti::decode(bytes);
    EXPECT_FALSE(img.orientation.is_identity());
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x) ASSERT_EQ(img.data(x, y, z), g(e.x - 1 - x, y, z));
    // Writing back on the source grid undoes the flip and keeps the source header.
    const std::string back = nifti::encode_like(img, img.data, nifti::DataType::Float32);
    EXPECT_EQ(back, bytes);
}

TEST(Nifti, PermutedAxesAreCanonicalized) {
    const Extent3 e{4, 3, 2};
    const Grid<float> g = numbered(e);
    std::string bytes = nifti::encode(g, {1.0, 2.0, 3.0}, nifti::DataType::Float32);
    // Native x runs along world y and native y along world x.
    put_float(bytes, 280, 0.0f);
    put_float(bytes, 284, 2.0f);
    put_float(bytes, 296, 1.0f);
    put_float(bytes, 300, 0.0f);
    const auto img = nifti::decode(bytes);
    ASSERT_EQ(img.data.extent(), (Extent3{3, 4, 2}));
    EXPECT_EQ(img.spacing, (Spacing3{2.0, 1.0, 3.0}));
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 3; ++x) ASSERT_EQ(img.data(x, y, z), g(y, x, z));
    EXPECT_EQ(nifti::encode_like(img, img.data, nifti::DataType::Float32), bytes);
}

TEST(Nifti, CorruptInputsAreParseErrors) {
    const std::string good = nifti::encode(numbered({3, 3, 3}), {1, 1, 1}, nifti::DataType::Float32);
    const std::vector<std::string> bad = {
        "", "hello", good.substr(0, 200), good.substr(0, good.size() - 4),
        std::string(good).replace(344, 3, "xyz"), nifti::gzip(good).substr(0, 30)};
    for (const auto& b : bad) {
        try {
            nifti::decode(b);
            FAIL() << "accepted corrupt input of size " << b.size();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::Parse);
        }
    }
}

TEST(Nifti, MissingFileIsIoError) {
    try {
        nifti::read("/nonexistent/definitely/missing.nii");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Io);
    }
}

TEST(Phantom, SpecRoundTrip) {
    const auto spec = parse_phantom_spec(
        "extent = 40 30 20\nspacing = 1 1.5 2\nbackground_hu = -80\nnoise_sigma_hu = 0\n"
        "shape = sphere label=1 center=20,15,10 radius=6 offset_hu=300\n"
        "shape = box label=2 center=8,8,8 half=3,2,4 offset_hu=-200\n"
        "shape = tube label=3 p0=2,20,10 p1=38,20,10 radius=3 offset_hu=450\n");
    EXPECT_EQ(spec.extent, (Extent3{40, 30, 20}));
    ASSERT_EQ(spec.shapes.size(), 3u);
    EXPECT_EQ(spec.shapes[2].kind, ShapeKind::Tube);
    const auto again = parse_phantom_spec(format_phantom_spec(spec));
    EXPECT_EQ(format_phantom_spec(again), format_phantom_spec(spec));
    auto [a, la] = make_phantom(spec, 1);
    auto [b, lb] = make_phantom(again, 1);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(la.labels, lb.labels);
}

TEST(Phantom, BadSpecIsParseError) {
    EXPECT_THROW(parse_phantom_spec("extent = 10 10\n"), Error);
    EXPECT_THROW(parse_phantom_spec("shape = cone label=1\n"), Error);
    EXPECT_THROW(parse_phantom_spec("shape = sphere label=1 center=1,2,3\n"), Error);
}

TEST(Phantom, SphereVolumeMatchesAnalytic) {
    for (double r : {8.0, 9.5, 12.0}) {
        PhantomSpec spec;
        spec.extent = Extent3::cube(40);
        spec.noise_sigma_hu = 0;
        PhantomShape s;
        s.center = {19.3, 20.0, 20.6};
        s.radius = r;
        spec.shapes.push_back(s);
        auto [v, l] = make_phantom(spec, 0);
        const double voxels = static_cast<double>(count_true(label_mask(l.labels, 1)));
        const double analytic = 4.0 / 3.0 * std::numbers::pi * r * r * r;
        EXPECT_NEAR(voxels / analytic, 1.0, 0.05) << "r=" << r;
    }
}

TEST(Phantom, NoiselessIsPiecewiseConstant) {
    auto spec = random_phantom_spec(8);
    spec.noise_sigma_hu = 0;
    auto [v, l] = make_phantom(spec, 3);
    std::map<int, float> value;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const auto [it, fresh] = value.emplace(l.labels[i], v.data[i]);
        if (!fresh) ASSERT_EQ(it->second, v.data[i]);
    }
}

TEST(Phantom, LaterShapeWins) {
    const auto spec = parse_phantom_spec(
        "extent = 20 20 20\nnoise_sigma_hu = 0\n"
        "shape = sphere label=1 center=10,10,10 radius=6 offset_hu=300\n"
        "shape = box label=2 center=10,10,10 half=2,2,2 offset_hu=-200\n");
    auto [v, l] = make_phantom(spec, 0);
    EXPECT_EQ(l.labels(10, 10, 10), 2);
    EXPECT_FLOAT_EQ(v.data(10, 10, 10), static_cast<float>(spec.background_hu - 200.0));
    EXPECT_EQ(l.labels(10, 10, 15), 1);
}

TEST(Phantom, DeterministicInSeed) {
    const auto spec = random_phantom_spec(12);
    auto [a, la] = make_phantom(spec, 5);
    auto [b, lb] = make_phantom(spec, 5);
    auto [c, lc] = make_phantom(spec, 6);
    EXPECT_EQ(a.data, b.data);
    EXPECT_NE(a.data, c.data);
    EXPECT_EQ(la.labels, lc.labels);
}

TEST(Phantom, TubeSpansThreePatches) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto spec = tube_phantom_spec(s, 32, 3);
        auto [v, l] = make_phantom(spec, s);
        int lo = v.extent().x, hi = -1;
        for (int z = 0; z < v.extent().z; ++z)
            for (int y = 0; y < v.extent().y; ++y)
                for (int x = 0; x < v.extent().x; ++x)
                    if (l.labels(x, y, z) == 1) {
                        lo = std::min(lo, x);
                        hi = std::max(hi, x);
                    }
        EXPECT_GE(hi - lo + 1, 3 * 32);
    }
}

TEST(Dataset, WriteAndLoadPhantomDataset) {
    test::TempDir dir("dataset");
    write_phantom_dataset(dir.path(), 3, 7, PhantomFamily::Random);
    const auto cases = load_dataset(dir.path());
    ASSERT_EQ(cases.size(), 3u);
    EXPECT_EQ(cases[0].name, "case_0000");
    EXPECT_EQ(cases[2].name, "case_0002");
    for (const auto& c : cases) {
        EXPECT_EQ(c.image.unit, IntensityUnit::Normalized);
        EXPECT_EQ(c.image.extent(), c.labels.extent());
        EXPECT_FALSE(c.label_ids.empty());
        for (float x : c.image.data.values()) {
            ASSERT_GE(x, 0.0f);
            ASSERT_LE(x, 1.0f);
        }
    }
    const auto again = load_dataset(dir.path());
    EXPECT_EQ(again[1].image.data, cases[1].image.data);
}

TEST(Dataset, MissingDirectoryIsIoError) {
    try {
        load_dataset("/nonexistent/dataset/dir");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Io);
    }
}
