#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptseg/volume.hpp"

namespace promptseg {

enum class ShapeKind { Sphere, Box, Tube };

struct PhantomShape {
    ShapeKind kind = ShapeKind::Sphere;
    int label = 1;
    std::array<double, 3> center{};      // sphere, box (voxel units)
    double radius = 1.0;                 // sphere, tube
    std::array<double, 3> half_size{};   // box
    std::array<double, 3> p0{};          // tube axis start
    std::array<double, 3> p1{};          // tube axis end
    double offset_hu = 300.0;            // intensity above (or below) background
};

/// Synthetic labelled CT-like volume. Shapes are rasterized in order; where they overlap the
/// later shape wins both label and intensity.
struct PhantomSpec {
    Extent3 extent = Extent3::cube(64);
    Spacing3 spacing{1.5, 1.5, 1.5};
    double background_hu = -100.0;
    double noise_sigma_hu = 20.0;
    std::vector<PhantomShape> shapes;
};

/// Parses the key-value phantom description, e.g.
///
///     extent = 64 64 64
///     spacing = 1.5 1.5 1.5
///     background_hu = -100
///     noise_sigma_hu = 20
///     shape = sphere label=1 center=32,32,32 radius=8 offset_hu=300
///     shape = box label=2 center=16,40,20 half=5,4,6 offset_hu=-250
///     shape = tube label=3 p0=8,20,20 p1=56,20,20 radius=4 offset_hu=450
PhantomSpec parse_phantom_spec(std::string_view text);
std::string format_phantom_spec(const PhantomSpec& spec);

/// Raw-HU volume and its label map. Deterministic in (spec, seed).
std::pair<Volume, LabelMap> make_phantom(const PhantomSpec& spec, std::uint64_t rng_seed);

/// Distribution used for the desk training / evaluation sets.
struct RandomPhantomOptions {
    Extent3 extent = Extent3::cube(64);
    int min_shapes = 2;
    int max_shapes = 4;
    double min_radius = 5.0;
    double max_radius = 11.0;
    double tube_probability = 0.3;
    double box_probability = 0.3;
    double min_contrast_hu = 200.0;
    double max_contrast_hu = 600.0;
    double noise_sigma_hu = 20.0;
};

PhantomSpec random_phantom_spec(std::uint64_t rng_seed, const RandomPhantomOptions& options = {});

/// Long axis-aligned tube (length = `length_in_patches` patch sides) plus small distractors.
/// The tube is label 1.
PhantomSpec tube_phantom_spec(std::uint64_t rng_seed, int patch_side, int length_in_patches = 3);

}  // namespace promptseg
