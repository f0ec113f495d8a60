#include <gtest/gtest.h>
#include <zlib.h>

#include <random>

#include "promptseg/codec.hpp"
#include "test_support.hpp"

using namespace promptseg;

namespace {

std::uint32_t be32(const std::string& s, std::size_t off) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 3]));
}

}  // namespace

TEST(Base64, KnownVectors) {
    const std::vector<std::pair<std::string, std::string>> v = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="},
        {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}, {std::string("\0\xff\x10", 3), "AP8Q"}};
    for (const auto& [plain, enc] : v) {
        EXPECT_EQ(base64_encode(plain), enc);
        EXPECT_EQ(base64_decode(enc), plain);
    }
    EXPECT_THROW(base64_decode("Zm9v!"), Error);
    EXPECT_THROW(base64_decode("Zm9"), Error);
}

TEST(Base64, RandomRoundTrip) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        std::string s(rng() % 300, '\0');
        for (auto& c : s) c = static_cast<char>(rng());
        ASSERT_EQ(base64_decode(base64_encode(s)), s);
    }
}

TEST(Rle, RunsStartWithBackground) {
    Mask m({3, 1, 1});
    m(0, 0, 0) = 1;
    m(1, 0, 0) = 1;
    const PatchRef all{{0, 0, 0}, m.extent()};
    EXPECT_EQ(rle_encode(m, all), (std::vector<std::uint32_t>{0, 2, 1}));
    EXPECT_EQ(rle_encode(Mask({2, 2, 1}), PatchRef{{0, 0, 0}, {2, 2, 1}}), (std::vector<std::uint32_t>{4}));
}

TEST(Rle, RandomRoundTripInsideBoxes) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const Extent3 e = test::random_extent(rng, 1, 14);
        const Mask m = test::random_mask(rng, e, 0.3);
        PatchRef box;
        for (int a = 0; a < 3; ++a) {
            box.start[a] = static_cast<int>(rng() % static_cast<unsigned>(e[a]));
            box.size[a] = 1 + static_cast<int>(rng() % static_cast<unsigned>(e[a] - box.start[a]));
        }
        const auto runs = rle_encode(m, box);
        std::uint64_t total = 0;
        for (auto r : runs) total += r;
        ASSERT_EQ(total, static_cast<std::uint64_t>(box.size.voxels()));
        ASSERT_EQ(runs_from_bytes(runs_to_bytes(runs)), runs);
        ASSERT_EQ(rle_decode(runs, box.size), crop(m, box, std::uint8_t{0}));
    }
    EXPECT_THROW(rle_decode(std::vector<std::uint32_t>{3}, {2, 2, 1}), Error);
    EXPECT_THROW(runs_from_bytes("abc"), Error);
}

TEST(Rle, BytesAreLittleEndian) {
    EXPECT_EQ(runs_to_bytes(std::vector<std::uint32_t>{0x01020304u}), std::string("\x04\x03\x02\x01", 4));
}

TEST(MaskDelta, ReconstructsTheNewMask) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const Extent3 e = test::random_extent(rng, 1, 12);
        const Mask before = test::random_mask(rng, e, 0.2);
        Mask after = before;
        const Mask flip = test::cube_mask(e, {static_cast<int>(rng() % 4), static_cast<int>(rng() % 4), 0}, 3);
        for (std::size_t i = 0; i < after.size(); ++i) after[i] ^= flip[i];
        const auto d = mask_delta(before, after);
        std::int64_t changed = 0;
        for (std::size_t i = 0; i < after.size(); ++i) changed += before[i] != after[i];
        ASSERT_EQ(d.changed, changed);
        Mask applied = before;
        apply_delta(applied, d);
        ASSERT_EQ(applied, after);
        for (std::size_t i = 0; i < after.size(); ++i)
            if (before[i] != after[i]) ASSERT_TRUE(d.bbox.contains(after.unravel(static_cast<std::int64_t>(i))));
    }
}

TEST(MaskDelta, NoChangeIsEmpty) {
    const Mask m = test::cube_mask(Extent3::cube(5), {1, 1, 1}, 2);
    const auto d = mask_delta(m, m);
    EXPECT_EQ(d.changed, 0);
    EXPECT_EQ(d.bbox.size.voxels(), 0);
    EXPECT_EQ(d.runs, (std::vector<std::uint32_t>{0}));
    Mask copy = m;
    apply_delta(copy, d);
    EXPECT_EQ(copy, m);
}

TEST(Png, ValidChunksAndPixels) {
    const int w = 7, h = 5;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w * h * 3));
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 37);
    const std::string png = encode_png_rgb(w, h, rgb);
    ASSERT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));

    std::size_t off = 8;
    std::string idat;
    std::vector<std::string> types;
    while (off < png.size()) {
        const std::uint32_t len = be32(png, off);
        const std::string type = png.substr(off + 4, 4);
        const std::string data = png.substr(off + 8, len);
        const std::uint32_t crc = be32(png, off + 8 + len);
        const auto computed = static_cast<std::uint32_t>(
            crc32(crc32(0, reinterpret_cast<const Bytef*>(type.data()), 4), reinterpret_cast<const Bytef*>(data.data()),
                  len));
        ASSERT_EQ(crc, computed) << type;
        types.push_back(type);
        if (type == "IHDR") {
            EXPECT_EQ(be32(data, 0), static_cast<std::uint32_t>(w));
            EXPECT_EQ(be32(data, 4), static_cast<std::uint32_t>(h));
            EXPECT_EQ(data[8], 8);
            EXPECT_EQ(data[9], 2);
        }
        if (type == "IDAT") idat += data;
        off += 12 + len;
    }
    EXPECT_EQ(types.front(), "IHDR");
    EXPECT_EQ(types.back(), "IEND");

    std::string raw(static_cast<std::size_t>(h * (1 + 3 * w)), '\0');
    uLongf raw_len = raw.size();
    ASSERT_EQ(uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                         idat.size()),
              Z_OK);
    ASSERT_EQ(raw_len, raw.size());
    for (int r = 0; r < h; ++r) {
        EXPECT_EQ(raw[static_cast<std::size_t>(r * (1 + 3 * w))], 0);
        for (int c = 0; c < 3 * w; ++c) {
            ASSERT_EQ(static_cast<std::uint8_t>(raw[static_cast<std::size_t>(r * (1 + 3 * w) + 1 + c)]),
                      rgb[static_cast<std::size_t>(r * 3 * w + c)]);
        }
    }
    EXPECT_THROW(encode_png_rgb(2, 2, std::vector<std::uint8_t>(5)), Error);
}
