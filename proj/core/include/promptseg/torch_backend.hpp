#pragma once

#include "promptseg/checkpoint.hpp"
#include "promptseg/infer.hpp"

namespace promptseg {

/// Segmentation backend over a trained network. Forward passes run without gradients and may
/// be issued concurrently; the model is treated as read-only.
class TorchSegmentation final : public SegmentationBackend {
public:
    explicit TorchSegmentation(SegModel model);
    Extent3 patch_size() const override { return model_->config.patch_size; }
    double prompt_sigma_vox() const override { return model_->config.prompt_sigma_vox; }
    Grid<float> predict(const Grid<float>& image, const PromptMaps& maps, std::span<const Click> local_clicks,
                        const PatchRef& window) const override;

private:
    mutable SegModel model_;
};

class TorchCrossPatch final : public CrossPatchBackend {
public:
    explicit TorchCrossPatch(CppModel model);
    Grid<float> predict(const Grid<float>& u_image, const Grid<float>& u_prob, const Grid<float>& v_image,
                        const PatchRef& u, const PatchRef& v) const override;

private:
    mutable CppModel model_;
};

/// A loaded checkpoint with its backends and an engine wired to them.
struct LoadedEngine {
    explicit LoadedEngine(ModelBundle bundle, EngineOptions options = {});
    LoadedEngine(const LoadedEngine&) = delete;
    LoadedEngine& operator=(const LoadedEngine&) = delete;

    ModelBundle bundle;
    TorchSegmentation seg;
    std::optional<TorchCrossPatch> cpp;
    Engine engine;
};

}  // namespace promptseg
