#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promptseg/phantom.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

struct PreprocessOptions {
    double target_spacing_mm = 1.5;
    double clip_lo_hu = kDefaultClipLoHU;
    double clip_hi_hu = kDefaultClipHiHU;
};

/// One preprocessed volume: isotropic, intensities in [0, 1], labels on the same grid.
struct Case {
    std::string name;
    Volume image;
    LabelMap labels;
    std::vector<int> label_ids;  // non-zero labels with at least one voxel, ascending
};

std::vector<int> present_labels(const LabelMap& labels);

Case preprocess_case(std::string name, const Volume& raw, const LabelMap& labels,
                     const PreprocessOptions& options = {});

/// Dataset directory layout: one sub-directory per case holding image.nii.gz and
/// label.nii.gz. Cases are returned in lexicographic directory order.
std::vector<Case> load_dataset(const std::filesystem::path& dir, const PreprocessOptions& options = {});

void write_case(const std::filesystem::path& case_dir, const Volume& raw, const LabelMap& labels);

enum class PhantomFamily { Random, Tube };

/// Writes `count` phantoms named case_0000, case_0001, ... Case i uses seed mix(seed, i).
void write_phantom_dataset(const std::filesystem::path& dir, int count, std::uint64_t seed,
                           PhantomFamily family, int patch_side = 32);

/// Deterministic 64-bit mixing used to derive per-item seeds from a run seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace promptseg
