#include "promptseg/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <limits>

namespace promptseg {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

void put_u32_be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>(v >> 16));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char* type, std::string_view data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t type_at = out.size();
    out.append(type, 4);
    out.append(data);
    const auto* p = reinterpret_cast<const Bytef*>(out.data() + type_at);
    put_u32_be(out, static_cast<std::uint32_t>(crc32(0L, p, static_cast<uInt>(4 + data.size()))));
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const auto v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                       (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const auto v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const auto v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw Error(ErrorCode::Parse, "base64 length must be a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + static_cast<std::size_t>(k)];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                v[k] = 0;
                ++pad;
            } else if (pad > 0 || (v[k] = b64_value(c)) < 0) {
                throw Error(ErrorCode::Parse, "invalid base64 character");
            }
        }
        const std::uint32_t w = (std::uint32_t(v[0]) << 18) | (std::uint32_t(v[1]) << 12) |
                                (std::uint32_t(v[2]) << 6) | std::uint32_t(v[3]);
        out.push_back(static_cast<char>(w >> 16));
        if (pad < 2) out.push_back(static_cast<char>(w >> 8));
        if (pad < 1) out.push_back(static_cast<char>(w));
    }
    return out;
}

std::vector<std::uint32_t> rle_encode(const Mask& mask, const PatchRef& box) {
    const auto& e = mask.extent();
    for (int axis = 0; axis < 3; ++axis) {
        if (box.start[axis] < 0 || box.size[axis] < 0 || box.start[axis] + box.size[axis] > e[axis]) {
            throw Error(ErrorCode::InvalidInput, "RLE box exceeds the mask");
        }
    }
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int z = box.start.z; z < box.start.z + box.size.z; ++z)
        for (int y = box.start.y; y < box.start.y + box.size.y; ++y)
            for (int x = box.start.x; x < box.start.x + box.size.x; ++x) {
                const std::uint8_t v = mask(x, y, z) ? 1 : 0;
                if (v != current) {
                    runs.push_back(run);
                    run = 0;
                    current = v;
                }
                ++run;
            }
    if (run > 0 || runs.empty()) runs.push_back(run);
    return runs;
}

Mask rle_decode(std::span<const std::uint32_t> runs, const Extent3& size) {
    Mask m(size);
    std::uint64_t pos = 0;
    std::uint8_t v = 0;
    const auto total = static_cast<std::uint64_t>(size.voxels());
    for (const auto r : runs) {
        if (pos + r > total) throw Error(ErrorCode::Parse, "RLE runs exceed the box volume");
        if (v) std::fill_n(m.values().begin() + static_cast<std::ptrdiff_t>(pos), r, std::uint8_t{1});
        pos += r;
        v ^= 1;
    }
    if (pos != total) throw Error(ErrorCode::Parse, "RLE runs do not cover the box volume");
    return m;
}

std::string runs_to_bytes(std::span<const std::uint32_t> runs) {
    std::string out;
    out.reserve(runs.size() * 4);
    for (const auto r : runs) {
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((r >> (8 * k)) & 0xff));
    }
    return out;
}

std::vector<std::uint32_t> runs_from_bytes(std::string_view bytes) {
    if (bytes.size() % 4 != 0) throw Error(ErrorCode::Parse, "RLE byte stream length must be a multiple of 4");
    std::vector<std::uint32_t> runs(bytes.size() / 4);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= std::uint32_t(std::uint8_t(bytes[4 * i + static_cast<std::size_t>(k)])) << (8 * k);
        runs[i] = v;
    }
    return runs;
}

MaskDelta mask_delta(const Mask& before, const Mask& after) {
    require_same_extent(before, after, "mask_delta");
    const auto& e = after.extent();
    std::array<int, 3> lo{e.x, e.y, e.z}, hi{-1, -1, -1};
    MaskDelta d;
    for (int z = 0; z < e.z; ++z)
        for (int y = 0; y < e.y; ++y)
            for (int x = 0; x < e.x; ++x) {
                if ((before(x, y, z) != 0) == (after(x, y, z) != 0)) continue;
                ++d.changed;
                const std::array<int, 3> p{x, y, z};
                for (std::size_t a = 0; a < 3; ++a) {
                    lo[a] = std::min(lo[a], p[a]);
                    hi[a] = std::max(hi[a], p[a]);
                }
            }
    if (d.changed == 0) {
        d.runs = {0};
        return d;
    }
    d.bbox.start = {lo[0], lo[1], lo[2]};
    d.bbox.size = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    d.runs = rle_encode(after, d.bbox);
    return d;
}

void apply_delta(Mask& mask, const MaskDelta& delta) {
    if (delta.bbox.size.voxels() == 0) return;
    paste(mask, delta.bbox, rle_decode(delta.runs, delta.bbox.size));
}

std::string encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb) {
    if (width < 1 || height < 1 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw Error(ErrorCode::InvalidInput, "PNG pixel buffer does not match its size");
    }
    std::string raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * static_cast<std::size_t>(width)));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        const auto* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
        raw.append(reinterpret_cast<const char*>(row), static_cast<std::size_t>(width) * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string z(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(z.data()), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw Error(ErrorCode::Io, "PNG compression failed");
    }
    z.resize(bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", z);
    put_chunk(out, "IEND", {});
    return out;
}

}  // namespace promptseg
