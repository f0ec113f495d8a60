#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "promptseg/volume.hpp"

namespace promptseg::nifti {

/// Axis permutation and flips that take a file's native voxel order to the canonical order
/// (voxel axis k runs along world axis k with increasing coordinate). Only axis-aligned
/// orientations are represented; oblique matrices are snapped to their dominant axes.
struct Reorientation {
    std::array<int, 3> native_axis{0, 1, 2};  // canonical axis k reads native axis native_axis[k]
    std::array<bool, 3> flip{false, false, false};
    Extent3 native_extent{};

    bool is_identity() const {
        return native_axis == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2];
    }
    Index3 to_native(const Index3& canonical) const;
    Index3 to_canonical(const Index3& native) const;

    template <class T>
    Grid<T> canonical_from_native(const Grid<T>& native) const;
    template <class T>
    Grid<T> native_from_canonical(const Grid<T>& canonical) const;
};

/// Decoded NIfTI-1 image in canonical orientation. `header` keeps the raw 348-byte native
/// header so that derived images (masks) can be written back on the source grid.
struct Image {
    Grid<float> data;
    Spacing3 spacing{1.0, 1.0, 1.0};
    Reorientation orientation;
    std::string header;
};

enum class DataType { UInt8, Int16, Float32 };

Image decode(std::string_view bytes);
Image read(const std::filesystem::path& path);

Volume read_volume(const std::filesystem::path& path);
LabelMap read_labels(const std::filesystem::path& path);

/// Uncompressed .nii bytes with identity direction and the given spacing.
std::string encode(const Grid<float>& data, const Spacing3& spacing, DataType type);

/// Uncompressed .nii bytes on the native grid of `like`: the data is mapped back through the
/// reorientation and written with the source header geometry.
std::string encode_like(const Image& like, const Grid<float>& canonical_data, DataType type);

/// Writes .nii, or gzip-compressed bytes when the path ends in .gz.
void write(const std::filesystem::path& path, const Grid<float>& data, const Spacing3& spacing,
           DataType type = DataType::Float32);
void write_volume(const std::filesystem::path& path, const Volume& v);
void write_labels(const std::filesystem::path& path, const Grid<Label>& labels, const Spacing3& spacing);
void write_mask(const std::filesystem::path& path, const Mask& mask, const Spacing3& spacing);

std::string gunzip_if_needed(std::string_view bytes);
std::string gzip(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);
/// Writes bytes, gzip-compressing when the path ends in .gz.
void write_nii_bytes(const std::filesystem::path& path, const std::string& nii);

template <class T>
Grid<T> Reorientation::canonical_from_native(const Grid<T>& native) const {
    Extent3 ce{};
    for (int k = 0; k < 3; ++k) ce[k] = native.extent()[native_axis[static_cast<std::size_t>(k)]];
    Grid<T> out(ce);
    for (int z = 0; z < ce.z; ++z)
        for (int y = 0; y < ce.y; ++y)
            for (int x = 0; x < ce.x; ++x) out(x, y, z) = native(to_native({x, y, z}));
    return out;
}

template <class T>
Grid<T> Reorientation::native_from_canonical(const Grid<T>& canonical) const {
    Grid<T> out(native_extent);
    for (int z = 0; z < native_extent.z; ++z)
        for (int y = 0; y < native_extent.y; ++y)
            for (int x = 0; x < native_extent.x; ++x) out(x, y, z) = canonical(to_canonical({x, y, z}));
    return out;
}

}  // namespace promptseg::nifti
