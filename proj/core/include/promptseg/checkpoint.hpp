#pragma once

#include <filesystem>
#include <optional>

#include "promptseg/network.hpp"

namespace promptseg {

inline constexpr const char* kCheckpointFormat = "promptseg-checkpoint/1";

struct ModelBundle {
    NetworkConfig config;
    SegModel seg{nullptr};
    CppModel cpp{nullptr};  // null when trained without the cross-patch branch
    KeyValueConfig metadata;
};

/// Self-describing archive: format tag, network config, free-form metadata, then every
/// parameter and buffer under "seg/<name>" and "cpp/<name>".
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);

/// Rebuilds the networks from the stored config and loads their tensors. Missing or
/// mis-shaped tensors and unknown format tags are reported as parse errors.
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace promptseg
