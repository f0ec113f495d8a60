#include "promptseg/torch_backend.hpp"

namespace promptseg {

TorchSegmentation::TorchSegmentation(SegModel model) : model_(std::move(model)) {
    if (!model_) throw Error(ErrorCode::InvalidInput, "segmentation backend needs a model");
    model_->eval();
}

Grid<float> TorchSegmentation::predict(const Grid<float>& image, const PromptMaps& maps,
                                       std::span<const Click> local_clicks, const PatchRef&) const {
    torch::NoGradGuard guard;
    PromptBatch prompts{to_tensor(maps), {std::vector<Click>(local_clicks.begin(), local_clicks.end())}};
    return to_grid(model_->forward(to_tensor(image), prompts));
}

TorchCrossPatch::TorchCrossPatch(CppModel model) : model_(std::move(model)) {
    if (!model_) throw Error(ErrorCode::InvalidInput, "cross-patch backend needs a model");
    model_->eval();
}

Grid<float> TorchCrossPatch::predict(const Grid<float>& u_image, const Grid<float>& u_prob,
                                     const Grid<float>& v_image, const PatchRef&, const PatchRef&) const {
    torch::NoGradGuard guard;
    return to_grid(model_->forward(to_tensor(u_image), to_tensor(u_prob), to_tensor(v_image)));
}

namespace {

const CrossPatchBackend* maybe(const std::optional<TorchCrossPatch>& c) {
    return c ? &*c : nullptr;
}

}  // namespace

LoadedEngine::LoadedEngine(ModelBundle b, EngineOptions options)
    : bundle(std::move(b)),
      seg(bundle.seg),
      cpp(bundle.cpp ? std::optional<TorchCrossPatch>(std::in_place, bundle.cpp) : std::nullopt),
      engine(seg, maybe(cpp), options) {}

}  // namespace promptseg
