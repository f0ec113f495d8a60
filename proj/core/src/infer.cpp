#include "promptseg/infer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include "promptseg/heatmap.hpp"

namespace promptseg {

namespace {

PatchRef in_volume_part(const PatchRef& p, const Extent3& e) {
    PatchRef r;
    for (int axis = 0; axis < 3; ++axis) {
        const int lo = std::max(0, p.start[axis]);
        const int hi = std::min(e[axis], p.start[axis] + p.size[axis]);
        r.start[axis] = lo;
        r.size[axis] = std::max(0, hi - lo);
    }
    return r;
}

template <class F>
void for_each_voxel(const PatchRef& p, F&& f) {
    for (int z = p.start.z; z < p.start.z + p.size.z; ++z)
        for (int y = p.start.y; y < p.start.y + p.size.y; ++y)
            for (int x = p.start.x; x < p.start.x + p.size.x; ++x) f(x, y, z);
}

std::tuple<int, int, int> start_key(const PatchRef& p) {
    return {p.start.x, p.start.y, p.start.z};
}

}  // namespace

// --- oracles --------------------------------------------------------------------------------

OracleSegmentation::OracleSegmentation(Mask gt, Extent3 patch, float confidence)
    : gt_(std::move(gt)), patch_(patch), confidence_(confidence) {}

Grid<float> OracleSegmentation::predict(const Grid<float>&, const PromptMaps&, std::span<const Click>,
                                        const PatchRef& window) const {
    const Mask m = crop(gt_, window, std::uint8_t{0});
    Grid<float> out(m.extent());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? confidence_ : -confidence_;
    return out;
}

OracleCrossPatch::OracleCrossPatch(Mask gt, double sigma_vox) : gt_(std::move(gt)), sigma_(sigma_vox) {}

Grid<float> OracleCrossPatch::predict(const Grid<float>&, const Grid<float>&, const Grid<float>&,
                                      const PatchRef&, const PatchRef& v) const {
    return make_centroid_heatmap(crop(gt_, v, std::uint8_t{0}), sigma_);
}

// --- session ----------------------------------------------------------------------------------

std::size_t Session::human_clicks() const {
    return static_cast<std::size_t>(
        std::count_if(clicks.begin(), clicks.end(), [](const SessionClick& c) { return !c.synthetic; }));
}

std::vector<Click> Session::click_list() const {
    std::vector<Click> out;
    out.reserve(clicks.size());
    for (const auto& c : clicks) out.push_back(c.click);
    return out;
}

PatchRef place_patch(const Extent3& volume_shape, const Index3& click, const Extent3& patch_size) {
    if (!volume_shape.contains(click)) {
        throw Error(ErrorCode::InvalidInput, "click lies outside the volume");
    }
    return window_around(click, patch_size, volume_shape);
}

std::vector<PatchRef> neighbour_windows(const PatchRef& p, const Extent3& volume_shape) {
    std::vector<PatchRef> out;
    out.reserve(26);
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                PatchRef n = p;
                n.start = {p.start.x + dx * p.size.x, p.start.y + dy * p.size.y, p.start.z + dz * p.size.z};
                out.push_back(clamp_window(n, volume_shape));
            }
    return out;
}

Engine::Engine(const SegmentationBackend& seg, const CrossPatchBackend* cpp, EngineOptions options)
    : seg_(seg), cpp_(cpp), options_(options) {
    const double tau = options_.policy.peak_threshold;
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::InvalidInput, "peak threshold must lie in (0, 1)");
    if (options_.policy.max_ring < 1) throw Error(ErrorCode::InvalidInput, "max_ring must be at least 1");
}

Session Engine::new_session(Volume normalized) const {
    if (normalized.unit != IntensityUnit::Normalized) {
        throw Error(ErrorCode::InvalidInput, "sessions need a normalized volume");
    }
    Session s;
    const Extent3 e = normalized.extent();
    s.volume = std::move(normalized);
    s.logit_sum = Grid<float>(e);
    s.weight = Grid<float>(e);
    s.mask = Mask(e);
    return s;
}

Grid<float> Engine::probabilities(const Session& s, const PatchRef& window) const {
    Grid<float> out(window.size);
    const PatchRef inside = in_volume_part(window, s.volume.extent());
    for_each_voxel(inside, [&](int x, int y, int z) {
        const float w = s.weight(x, y, z);
        if (w > 0) {
            const double mean = static_cast<double>(s.logit_sum(x, y, z)) / w;
            out(x - window.start.x, y - window.start.y, z - window.start.z) =
                static_cast<float>(1.0 / (1.0 + std::exp(-mean)));
        }
    });
    return out;
}

void Engine::segment_into(Session& s, const PatchRef& patch, ActionRecord& action) const {
    if (!(patch.size == seg_.patch_size())) {
        throw Error(ErrorCode::ShapeMismatch, "window does not match the backend patch size");
    }
    std::vector<Click> local;
    for (const auto& c : s.clicks) {
        if (patch.contains(c.click.position)) local.push_back({patch.to_local(c.click.position), c.click.polarity});
    }
    if (local.empty()) throw Error(ErrorCode::InvalidInput, "no session click lies inside the window");

    PromptMaps maps = render_clicks(local, patch.size, seg_.prompt_sigma_vox());
    maps.y_map = probabilities(s, patch);
    const Grid<float> image = crop(s.volume.data, patch, 0.0f);
    const Grid<float> logits = seg_.predict(image, maps, local, patch);
    if (!(logits.extent() == patch.size)) {
        throw Error(ErrorCode::ShapeMismatch, "backend returned logits of the wrong shape");
    }

    const PatchRef inside = in_volume_part(patch, s.volume.extent());
    action.windows.push_back({inside, crop(s.logit_sum, inside, 0.0f), crop(s.weight, inside, 0.0f)});
    const bool mean = options_.merge == MergeMode::Mean;
    for_each_voxel(inside, [&](int x, int y, int z) {
        const float l = logits(x - patch.start.x, y - patch.start.y, z - patch.start.z);
        float& sum = s.logit_sum(x, y, z);
        float& w = s.weight(x, y, z);
        if (mean) {
            sum += l;
            w += 1.0f;
        } else {
            sum = l;
            w = 1.0f;
        }
        s.mask(x, y, z) = sum > 0.0f ? 1 : 0;
    });
}

PropagationReport Engine::propagate_into(Session& s, const PatchRef& seed, const PropagationPolicy& policy,
                                         ActionRecord& action) const {
    PropagationReport rep;
    if (!cpp_) return rep;
    const Extent3 e = s.volume.extent();
    std::set<std::tuple<int, int, int>> segmented{start_key(seed)};
    std::deque<std::pair<PatchRef, int>> queue{{seed, 0}};

    while (!queue.empty()) {
        const auto [u, ring] = queue.front();
        queue.pop_front();
        if (ring >= policy.max_ring) continue;
        const Grid<float> u_img = crop(s.volume.data, u, 0.0f);
        const Grid<float> u_prob = probabilities(s, u);
        for (const PatchRef& v : neighbour_windows(u, e)) {
            if (segmented.count(start_key(v))) continue;
            const Grid<float> v_img = crop(s.volume.data, v, 0.0f);
            const Grid<float> heat = cpp_->predict(u_img, u_prob, v_img, u, v);
            ++rep.evaluated;

            // Peak voxel; ties keep the lexicographically smallest (x, y, z).
            float peak = -1.0f;
            Index3 at{};
            for (int x = 0; x < v.size.x; ++x)
                for (int y = 0; y < v.size.y; ++y)
                    for (int z = 0; z < v.size.z; ++z) {
                        const Index3 g = v.to_global({x, y, z});
                        if (!e.contains(g)) continue;
                        if (heat(x, y, z) > peak) {
                            peak = heat(x, y, z);
                            at = g;
                        }
                    }
            if (!(peak > policy.peak_threshold)) continue;

            const Click synthetic{at, Polarity::Positive};
            s.clicks.push_back({synthetic, true});
            rep.synthetic_clicks.push_back(synthetic);
            segment_into(s, v, action);
            segmented.insert(start_key(v));
            rep.segmented.push_back(v);
            queue.emplace_back(v, ring + 1);
        }
    }
    return rep;
}

ActionResult Engine::click(Session& s, const Click& click, bool use_cpp) const {
    ActionRecord action;
    action.clicks_before = s.clicks.size();
    ActionResult result;
    result.patch = place_patch(s.volume.extent(), click.position, seg_.patch_size());
    s.clicks.push_back({click, false});
    try {
        segment_into(s, result.patch, action);
        if (use_cpp) result.propagation = propagate_into(s, result.patch, options_.policy, action);
    } catch (...) {
        // Leave the session exactly as it was before the failed action.
        s.history.push_back(std::move(action));
        undo(s);
        throw;
    }
    s.history.push_back(std::move(action));
    return result;
}

void Engine::segment_patch(Session& s, const PatchRef& patch) const {
    ActionRecord action;
    action.clicks_before = s.clicks.size();
    segment_into(s, patch, action);
    s.history.push_back(std::move(action));
}

PropagationReport Engine::propagate_cpp(Session& s, const PatchRef& seed, const PropagationPolicy& policy) const {
    if (!(policy.peak_threshold > 0.0 && policy.peak_threshold < 1.0) || policy.max_ring < 1) {
        throw Error(ErrorCode::InvalidInput, "invalid propagation policy");
    }
    ActionRecord action;
    action.clicks_before = s.clicks.size();
    auto rep = propagate_into(s, seed, policy, action);
    s.history.push_back(std::move(action));
    return rep;
}

void Engine::undo(Session& s) const {
    if (s.history.empty()) throw Error(ErrorCode::NothingToUndo, "nothing to undo");
    ActionRecord action = std::move(s.history.back());
    s.history.pop_back();
    for (auto it = action.windows.rbegin(); it != action.windows.rend(); ++it) {
        paste(s.logit_sum, it->window, it->logit_sum);
        paste(s.weight, it->window, it->weight);
        for_each_voxel(it->window, [&](int x, int y, int z) {
            s.mask(x, y, z) = s.weight(x, y, z) > 0 && s.logit_sum(x, y, z) > 0.0f ? 1 : 0;
        });
    }
    s.clicks.resize(action.clicks_before);
}

void Engine::reset(Session& s) const {
    s.clicks.clear();
    s.history.clear();
    s.logit_sum.fill(0.0f);
    s.weight.fill(0.0f);
    s.mask.fill(0);
}

// --- transcripts -------------------------------------------------------------------------------

std::vector<TranscriptEntry> parse_transcript(std::string_view text) {
    std::vector<TranscriptEntry> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        TranscriptEntry e;
        if (tok.size() == 1 && tok[0] == "undo") {
            e.kind = TranscriptEntry::Kind::Undo;
        } else if (tok.size() == 1 && tok[0] == "reset") {
            e.kind = TranscriptEntry::Kind::Reset;
        } else if (tok.size() == 4 || (tok.size() == 5 && tok[4] == "cpp")) {
            try {
                e.click.position = {std::stoi(tok[0]), std::stoi(tok[1]), std::stoi(tok[2])};
            } catch (const std::exception&) {
                throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad click coordinates");
            }
            e.click.polarity = parse_polarity(tok[3]);
            e.cpp = tok.size() == 5;
        } else {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected `x y z polarity [cpp]`, "
                                          "`undo` or `reset`");
        }
        out.push_back(e);
    }
    return out;
}

std::string format_transcript(std::span<const TranscriptEntry> entries) {
    std::ostringstream os;
    for (const auto& e : entries) {
        switch (e.kind) {
            case TranscriptEntry::Kind::Undo: os << "undo\n"; break;
            case TranscriptEntry::Kind::Reset: os << "reset\n"; break;
            case TranscriptEntry::Kind::Click:
                os << e.click.position.x << ' ' << e.click.position.y << ' ' << e.click.position.z << ' '
                   << polarity_name(e.click.polarity) << (e.cpp ? " cpp" : "") << '\n';
                break;
        }
    }
    return os.str();
}

// --- source grid mapping ----------------------------------------------------------------------

Index3 WorkingImage::to_working(const Index3& p) const {
    if (!source.data.extent().contains(p)) {
        throw Error(ErrorCode::InvalidInput, "click lies outside the volume");
    }
    return {source_to_working[0][static_cast<std::size_t>(p.x)], source_to_working[1][static_cast<std::size_t>(p.y)],
            source_to_working[2][static_cast<std::size_t>(p.z)]};
}

Mask WorkingImage::to_source(const Mask& working_mask) const {
    require_same_extent(working_mask, working.data, "to_source");
    const Extent3 e = source.data.extent();
    Mask out(e);
    for (int z = 0; z < e.z; ++z) {
        const int wz = source_to_working[2][static_cast<std::size_t>(z)];
        for (int y = 0; y < e.y; ++y) {
            const int wy = source_to_working[1][static_cast<std::size_t>(y)];
            for (int x = 0; x < e.x; ++x) {
                out(x, y, z) = working_mask(source_to_working[0][static_cast<std::size_t>(x)], wy, wz);
            }
        }
    }
    return out;
}

std::string WorkingImage::export_mask(const Mask& working_mask) const {
    const Mask m = to_source(working_mask);
    Grid<float> f(m.extent());
    for (std::size_t i = 0; i < m.size(); ++i) f[i] = m[i];
    return nifti::encode_like(source, f, nifti::DataType::UInt8);
}

WorkingImage prepare_working_image(nifti::Image source, const PreprocessOptions& options) {
    WorkingImage w;
    Volume raw{source.data, source.spacing, IntensityUnit::RawHU};
    w.working = preprocess_case("input", raw, LabelMap{}, options).image;
    const double t = options.target_spacing_mm;
    for (int axis = 0; axis < 3; ++axis) {
        auto& map = w.source_to_working[static_cast<std::size_t>(axis)];
        const int n = source.data.extent()[axis];
        const int m = w.working.extent()[axis];
        map.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double c = (i + 0.5) * source.spacing[static_cast<std::size_t>(axis)] / t;
            map[static_cast<std::size_t>(i)] = std::clamp(static_cast<int>(std::floor(c)), 0, m - 1);
        }
    }
    w.source = std::move(source);
    return w;
}

Mask replay_transcript(const Engine& engine, Session& session, const WorkingImage& image,
                       std::span<const TranscriptEntry> entries) {
    for (const auto& e : entries) {
        switch (e.kind) {
            case TranscriptEntry::Kind::Undo: engine.undo(session); break;
            case TranscriptEntry::Kind::Reset: engine.reset(session); break;
            case TranscriptEntry::Kind::Click:
                engine.click(session, {image.to_working(e.click.position), e.click.polarity}, e.cpp);
                break;
        }
    }
    return session.mask;
}

}  // namespace promptseg
