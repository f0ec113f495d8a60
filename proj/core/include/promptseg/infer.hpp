#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptseg/dataset.hpp"
#include "promptseg/nifti.hpp"
#include "promptseg/prompts.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

/// Produces logits for one patch from its image crop and rendered prompts.
class SegmentationBackend {
public:
    virtual ~SegmentationBackend() = default;
    virtual Extent3 patch_size() const = 0;
    virtual double prompt_sigma_vox() const { return kDefaultPromptSigmaVox; }
    /// `maps` carries P, N and Y on the patch grid; `local_clicks` are the same clicks in
    /// patch coordinates; `window` locates the patch in the working volume.
    virtual Grid<float> predict(const Grid<float>& image, const PromptMaps& maps,
                                std::span<const Click> local_clicks, const PatchRef& window) const = 0;
};

/// Predicts a heatmap on neighbour window v from the segmented window u.
class CrossPatchBackend {
public:
    virtual ~CrossPatchBackend() = default;
    virtual Grid<float> predict(const Grid<float>& u_image, const Grid<float>& u_prob,
                                const Grid<float>& v_image, const PatchRef& u, const PatchRef& v) const = 0;
};

/// Returns +/-`confidence` logits from a ground-truth mask (upper-bound harness).
class OracleSegmentation final : public SegmentationBackend {
public:
    OracleSegmentation(Mask gt, Extent3 patch, float confidence = 8.0f);
    Extent3 patch_size() const override { return patch_; }
    Grid<float> predict(const Grid<float>& image, const PromptMaps& maps, std::span<const Click> local_clicks,
                        const PatchRef& window) const override;

private:
    Mask gt_;
    Extent3 patch_;
    float confidence_;
};

/// Centroid heatmap of the ground truth inside the neighbour window.
class OracleCrossPatch final : public CrossPatchBackend {
public:
    explicit OracleCrossPatch(Mask gt, double sigma_vox = kDefaultPromptSigmaVox);
    Grid<float> predict(const Grid<float>& u_image, const Grid<float>& u_prob, const Grid<float>& v_image,
                        const PatchRef& u, const PatchRef& v) const override;

private:
    Mask gt_;
    double sigma_;
};

struct SessionClick {
    Click click;             // working-grid coordinates
    bool synthetic = false;  // placed by cross-patch propagation
};

/// Pre-action contents of one window, enough to restore it exactly.
struct WindowSnapshot {
    PatchRef window;
    Grid<float> logit_sum;
    Grid<float> weight;
};

struct ActionRecord {
    std::size_t clicks_before = 0;
    std::vector<WindowSnapshot> windows;
};

/// One interactive segmentation of one structure. The mask is (logit_sum > 0) where
/// weight > 0; since weights are positive this equals a positive weighted-mean logit.
struct Session {
    Volume volume;  // normalized working grid
    std::vector<SessionClick> clicks;
    Grid<float> logit_sum;
    Grid<float> weight;
    Mask mask;
    std::vector<ActionRecord> history;

    std::size_t human_clicks() const;
    std::vector<Click> click_list() const;
};

enum class MergeMode {
    /// Weighted mean of all logits written to a voxel.
    Mean,
    /// Each write replaces the voxel's logit.
    Latest,
};

struct PropagationPolicy {
    double peak_threshold = 0.5;
    int max_ring = 1;
};

struct EngineOptions {
    MergeMode merge = MergeMode::Mean;
    PropagationPolicy policy;
};

struct PropagationReport {
    std::vector<PatchRef> segmented;  // neighbour windows, in the order they were segmented
    std::vector<Click> synthetic_clicks;
    std::size_t evaluated = 0;        // cross-patch forward passes
};

struct ActionResult {
    PatchRef patch;
    PropagationReport propagation;
};

/// Window of the backend's patch size centred on the click and clamped into the volume.
PatchRef place_patch(const Extent3& volume_shape, const Index3& click, const Extent3& patch_size);

/// The 26 neighbour windows (offsets in {-s, 0, s}^3 minus the origin, clamped), in
/// z-major, then y, then x order of the offsets. Duplicates after clamping are kept.
std::vector<PatchRef> neighbour_windows(const PatchRef& p, const Extent3& volume_shape);

class Engine {
public:
    Engine(const SegmentationBackend& seg, const CrossPatchBackend* cpp = nullptr, EngineOptions options = {});

    Session new_session(Volume normalized) const;

    /// One undoable action: place a patch on the click, segment it and optionally propagate.
    ActionResult click(Session& s, const Click& click, bool use_cpp) const;

    /// Segments one window using every session click inside it. Recorded as its own action.
    void segment_patch(Session& s, const PatchRef& patch) const;

    /// Cross-patch propagation from an already segmented window. Recorded as its own action.
    PropagationReport propagate_cpp(Session& s, const PatchRef& seed, const PropagationPolicy& policy) const;

    /// Restores the state before the most recent action.
    void undo(Session& s) const;
    /// Clears canvas, clicks and history.
    void reset(Session& s) const;

    /// sigmoid(weighted mean logit) inside the window, 0 where nothing was written.
    Grid<float> probabilities(const Session& s, const PatchRef& window) const;

    const SegmentationBackend& backend() const { return seg_; }
    const EngineOptions& options() const { return options_; }

private:
    void segment_into(Session& s, const PatchRef& patch, ActionRecord& action) const;
    PropagationReport propagate_into(Session& s, const PatchRef& seed, const PropagationPolicy& policy,
                                     ActionRecord& action) const;

    const SegmentationBackend& seg_;
    const CrossPatchBackend* cpp_;
    EngineOptions options_;
};

// --- transcripts --------------------------------------------------------------------------

struct TranscriptEntry {
    enum class Kind { Click, Undo, Reset };
    Kind kind = Kind::Click;
    Click click;
    bool cpp = false;

    friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

/// One action per line: `x y z polarity [cpp]`, `undo`, or `reset`. `#` starts a comment.
std::vector<TranscriptEntry> parse_transcript(std::string_view text);
std::string format_transcript(std::span<const TranscriptEntry> entries);

// --- source grid <-> working grid ------------------------------------------------------------

/// An input image together with its preprocessed working grid and the voxel maps between them.
struct WorkingImage {
    nifti::Image source;  // canonical orientation, raw intensities
    Volume working;       // isotropic, normalized
    std::array<std::vector<int>, 3> source_to_working;  // per axis

    /// Working voxel containing the centre of a source voxel.
    Index3 to_working(const Index3& source_voxel) const;
    /// Nearest-neighbour mask on the canonical source grid.
    Mask to_source(const Mask& working_mask) const;
    /// uint8 NIfTI bytes (uncompressed) aligned with the original input file.
    std::string export_mask(const Mask& working_mask) const;
};

WorkingImage prepare_working_image(nifti::Image source, const PreprocessOptions& options = {});

/// Replays a transcript of source-grid clicks and returns the final working mask.
Mask replay_transcript(const Engine& engine, Session& session, const WorkingImage& image,
                       std::span<const TranscriptEntry> entries);

}  // namespace promptseg
