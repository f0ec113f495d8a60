#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptseg/volume.hpp"

namespace promptseg {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Run lengths of the mask inside `box`, visiting x fastest, then y, then z. Runs alternate
/// background / foreground starting with background, so the first run is zero when the
/// first voxel is set. The runs sum to the box volume.
std::vector<std::uint32_t> rle_encode(const Mask& mask, const PatchRef& box);
Mask rle_decode(std::span<const std::uint32_t> runs, const Extent3& size);

/// Runs as consecutive little-endian uint32 words.
std::string runs_to_bytes(std::span<const std::uint32_t> runs);
std::vector<std::uint32_t> runs_from_bytes(std::string_view bytes);

/// Changed region between two masks of equal shape and the new contents inside it.
struct MaskDelta {
    PatchRef bbox{{0, 0, 0}, {0, 0, 0}};  // empty when nothing changed
    std::vector<std::uint32_t> runs;
    std::int64_t changed = 0;
};

MaskDelta mask_delta(const Mask& before, const Mask& after);
/// Writes a delta's contents into `mask`.
void apply_delta(Mask& mask, const MaskDelta& delta);

/// 8-bit RGB PNG (colour type 2, no interlace, filter 0 on every row).
std::string encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);

}  // namespace promptseg
