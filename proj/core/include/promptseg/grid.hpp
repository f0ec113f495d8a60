#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "promptseg/error.hpp"

namespace promptseg {

/// Integer voxel coordinate. Axis order is (x, y, z) with x varying fastest in memory.
struct Index3 {
    int x = 0;
    int y = 0;
    int z = 0;

    constexpr int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    constexpr int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

    friend constexpr bool operator==(const Index3&, const Index3&) = default;
    friend constexpr auto operator<=>(const Index3&, const Index3&) = default;
};

struct Extent3 {
    int x = 0;
    int y = 0;
    int z = 0;

    constexpr int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    constexpr int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

    constexpr std::int64_t voxels() const {
        return static_cast<std::int64_t>(x) * y * z;
    }
    constexpr bool contains(const Index3& p) const {
        return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < x && p.y < y && p.z < z;
    }
    static constexpr Extent3 cube(int n) { return {n, n, n}; }

    friend constexpr bool operator==(const Extent3&, const Extent3&) = default;
};

using Spacing3 = std::array<double, 3>;

/// Dense 3D array, x fastest. Backing store for images, label maps, masks and canvases.
template <class T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    explicit Grid(Extent3 extent, T fill = T{}) : extent_(extent) {
        if (extent.x < 0 || extent.y < 0 || extent.z < 0) {
            throw Error(ErrorCode::InvalidInput, "grid extent must be non-negative");
        }
        data_.assign(static_cast<std::size_t>(extent.voxels()), fill);
    }
    Grid(Extent3 extent, std::vector<T> data) : extent_(extent), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != extent.voxels()) {
            throw Error(ErrorCode::ShapeMismatch, "grid data size does not match extent");
        }
    }

    const Extent3& extent() const { return extent_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::int64_t linear(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(extent_.x) * (y + static_cast<std::int64_t>(extent_.y) * z);
    }
    std::int64_t linear(const Index3& p) const { return linear(p.x, p.y, p.z); }
    Index3 unravel(std::int64_t i) const {
        const auto plane = static_cast<std::int64_t>(extent_.x) * extent_.y;
        const int z = static_cast<int>(i / plane);
        const auto rem = i - z * plane;
        return {static_cast<int>(rem % extent_.x), static_cast<int>(rem / extent_.x), z};
    }

    T& operator()(int x, int y, int z) { return data_[static_cast<std::size_t>(linear(x, y, z))]; }
    const T& operator()(int x, int y, int z) const {
        return data_[static_cast<std::size_t>(linear(x, y, z))];
    }
    T& operator()(const Index3& p) { return (*this)(p.x, p.y, p.z); }
    const T& operator()(const Index3& p) const { return (*this)(p.x, p.y, p.z); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.extent_ == b.extent_ && a.data_ == b.data_;
    }

private:
    Extent3 extent_{};
    std::vector<T> data_;
};

/// Boolean masks are stored one byte per voxel (0 or 1).
using Mask = Grid<std::uint8_t>;

inline std::int64_t count_true(const Mask& m) {
    std::int64_t n = 0;
    for (auto v : m.values()) n += v != 0;
    return n;
}

template <class A, class B>
void require_same_extent(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (!(a.extent() == b.extent())) {
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": grid shapes differ");
    }
}

}  // namespace promptseg
