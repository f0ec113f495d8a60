#include "promptseg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "promptseg/nifti.hpp"

namespace promptseg {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<int> present_labels(const LabelMap& labels) {
    std::set<int> ids;
    for (auto v : labels.labels.values()) {
        if (v != 0) ids.insert(v);
    }
    return {ids.begin(), ids.end()};
}

Case preprocess_case(std::string name, const Volume& raw, const LabelMap& labels,
                     const PreprocessOptions& options) {
    auto [iso, iso_labels] = resample_isotropic(raw, labels, options.target_spacing_mm);
    Case c;
    c.name = std::move(name);
    c.image = normalize_intensity(iso, options.clip_lo_hu, options.clip_hi_hu);
    c.labels = std::move(iso_labels);
    c.label_ids = present_labels(c.labels);
    return c;
}

std::vector<Case> load_dataset(const fs::path& dir, const PreprocessOptions& options) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "dataset directory not found: " + dir.string());
    std::vector<fs::path> cases;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "image.nii.gz") &&
            fs::exists(entry.path() / "label.nii.gz")) {
            cases.push_back(entry.path());
        }
    }
    std::sort(cases.begin(), cases.end());
    if (cases.empty()) throw Error(ErrorCode::InvalidInput, "no cases found in " + dir.string());

    std::vector<Case> out;
    out.reserve(cases.size());
    for (const auto& p : cases) {
        const Volume raw = nifti::read_volume(p / "image.nii.gz");
        const LabelMap labels = nifti::read_labels(p / "label.nii.gz");
        out.push_back(preprocess_case(p.filename().string(), raw, labels, options));
    }
    return out;
}

void write_case(const fs::path& case_dir, const Volume& raw, const LabelMap& labels) {
    fs::create_directories(case_dir);
    nifti::write_volume(case_dir / "image.nii.gz", raw);
    nifti::write_labels(case_dir / "label.nii.gz", labels.labels, raw.spacing);
}

void write_phantom_dataset(const fs::path& dir, int count, std::uint64_t seed, PhantomFamily family,
                           int patch_side) {
    if (count < 1) throw Error(ErrorCode::InvalidInput, "phantom count must be positive");
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(i));
        const PhantomSpec spec =
            family == PhantomFamily::Tube ? tube_phantom_spec(s, patch_side) : random_phantom_spec(s);
        auto [image, labels] = make_phantom(spec, mix_seed(s, 1));
        char name[32];
        std::snprintf(name, sizeof name, "case_%04d", i);
        write_case(dir / name, image, labels);
    }
}

}  // namespace promptseg
