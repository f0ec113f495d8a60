#include "promptseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "promptseg/kv_config.hpp"

namespace promptseg {

namespace {

std::array<double, 3> to_vec3(const std::string& key, const std::string& s) {
    const auto v = parse_doubles(s);
    if (v.size() != 3) throw Error(ErrorCode::Parse, "phantom: '" + key + "' needs three numbers");
    return {v[0], v[1], v[2]};
}

double segment_distance_sq(const std::array<double, 3>& p, const std::array<double, 3>& a,
                           const std::array<double, 3>& b) {
    std::array<double, 3> ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    std::array<double, 3> ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
    const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    double t = 0.0;
    if (len2 > 0) t = std::clamp((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2, 0.0, 1.0);
    double d2 = 0;
    for (int i = 0; i < 3; ++i) {
        const double d = ap[static_cast<std::size_t>(i)] - t * ab[static_cast<std::size_t>(i)];
        d2 += d * d;
    }
    return d2;
}

bool inside(const PhantomShape& s, const std::array<double, 3>& p) {
    switch (s.kind) {
        case ShapeKind::Sphere: {
            double d2 = 0;
            for (int i = 0; i < 3; ++i) {
                const double d = p[static_cast<std::size_t>(i)] - s.center[static_cast<std::size_t>(i)];
                d2 += d * d;
            }
            return d2 <= s.radius * s.radius;
        }
        case ShapeKind::Box:
            for (int i = 0; i < 3; ++i) {
                if (std::abs(p[static_cast<std::size_t>(i)] - s.center[static_cast<std::size_t>(i)]) >
                    s.half_size[static_cast<std::size_t>(i)])
                    return false;
            }
            return true;
        case ShapeKind::Tube: return segment_distance_sq(p, s.p0, s.p1) <= s.radius * s.radius;
    }
    return false;
}

// Axis-aligned voxel bounds of a shape, clipped to the grid.
std::pair<Index3, Index3> bounds(const PhantomShape& s, const Extent3& e) {
    std::array<double, 3> lo{};
    std::array<double, 3> hi{};
    for (std::size_t i = 0; i < 3; ++i) {
        switch (s.kind) {
            case ShapeKind::Sphere:
                lo[i] = s.center[i] - s.radius;
                hi[i] = s.center[i] + s.radius;
                break;
            case ShapeKind::Box:
                lo[i] = s.center[i] - s.half_size[i];
                hi[i] = s.center[i] + s.half_size[i];
                break;
            case ShapeKind::Tube:
                lo[i] = std::min(s.p0[i], s.p1[i]) - s.radius;
                hi[i] = std::max(s.p0[i], s.p1[i]) + s.radius;
                break;
        }
    }
    Index3 a{};
    Index3 b{};
    for (int i = 0; i < 3; ++i) {
        a[i] = std::clamp(static_cast<int>(std::floor(lo[static_cast<std::size_t>(i)])), 0, e[i]);
        b[i] = std::clamp(static_cast<int>(std::ceil(hi[static_cast<std::size_t>(i)])) + 1, 0, e[i]);
    }
    return {a, b};
}

const char* kind_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Box: return "box";
        case ShapeKind::Tube: return "tube";
    }
    return "?";
}

// Conservative capsule used for non-overlap placement.
struct Capsule {
    std::array<double, 3> a;
    std::array<double, 3> b;
    double r;
};

Capsule capsule_of(const PhantomShape& s) {
    switch (s.kind) {
        case ShapeKind::Sphere: return {s.center, s.center, s.radius};
        case ShapeKind::Box:
            return {s.center, s.center,
                    std::sqrt(s.half_size[0] * s.half_size[0] + s.half_size[1] * s.half_size[1] +
                              s.half_size[2] * s.half_size[2])};
        case ShapeKind::Tube: return {s.p0, s.p1, s.radius};
    }
    return {};
}

double capsule_gap(const Capsule& x, const Capsule& y) {
    // Sampled segment-segment distance; adequate for rejection placement.
    double best = 1e30;
    constexpr int kSteps = 24;
    for (int i = 0; i <= kSteps; ++i) {
        const double t = static_cast<double>(i) / kSteps;
        std::array<double, 3> p{};
        for (std::size_t k = 0; k < 3; ++k) p[k] = x.a[k] + t * (x.b[k] - x.a[k]);
        best = std::min(best, std::sqrt(segment_distance_sq(p, y.a, y.b)));
    }
    for (int i = 0; i <= kSteps; ++i) {
        const double t = static_cast<double>(i) / kSteps;
        std::array<double, 3> p{};
        for (std::size_t k = 0; k < 3; ++k) p[k] = y.a[k] + t * (y.b[k] - y.a[k]);
        best = std::min(best, std::sqrt(segment_distance_sq(p, x.a, x.b)));
    }
    return best - x.r - y.r;
}

}  // namespace

PhantomSpec parse_phantom_spec(std::string_view text) {
    const auto cfg = KeyValueConfig::parse(text);
    PhantomSpec spec;
    if (cfg.has("extent")) {
        const auto e = cfg.get_ints("extent");
        if (e.size() != 3 || e[0] < 1 || e[1] < 1 || e[2] < 1) {
            throw Error(ErrorCode::Parse, "phantom: extent needs three positive integers");
        }
        spec.extent = {e[0], e[1], e[2]};
    }
    if (cfg.has("spacing")) {
        const auto s = cfg.get_doubles("spacing");
        if (s.size() != 3 || s[0] <= 0 || s[1] <= 0 || s[2] <= 0) {
            throw Error(ErrorCode::Parse, "phantom: spacing needs three positive numbers");
        }
        spec.spacing = {s[0], s[1], s[2]};
    }
    spec.background_hu = cfg.get_double("background_hu", spec.background_hu);
    spec.noise_sigma_hu = cfg.get_double("noise_sigma_hu", spec.noise_sigma_hu);
    if (spec.noise_sigma_hu < 0) throw Error(ErrorCode::Parse, "phantom: noise_sigma_hu must be >= 0");

    for (const auto& line : cfg.get_all("shape")) {
        const auto tokens = split_tokens(line);
        if (tokens.empty()) throw Error(ErrorCode::Parse, "phantom: empty shape line");
        const auto attrs = parse_attributes(tokens, 1);
        auto need = [&](const char* key) -> const std::string& {
            auto it = attrs.find(key);
            if (it == attrs.end()) {
                throw Error(ErrorCode::Parse, "phantom: " + tokens[0] + " is missing '" + key + "'");
            }
            return it->second;
        };
        PhantomShape s;
        const auto& kind = tokens[0];
        if (kind == "sphere") {
            s.kind = ShapeKind::Sphere;
            s.center = to_vec3("center", need("center"));
            s.radius = std::stod(need("radius"));
        } else if (kind == "box") {
            s.kind = ShapeKind::Box;
            s.center = to_vec3("center", need("center"));
            s.half_size = to_vec3("half", need("half"));
        } else if (kind == "tube") {
            s.kind = ShapeKind::Tube;
            s.p0 = to_vec3("p0", need("p0"));
            s.p1 = to_vec3("p1", need("p1"));
            s.radius = std::stod(need("radius"));
        } else {
            throw Error(ErrorCode::Parse, "phantom: unknown shape kind '" + kind + "'");
        }
        s.label = std::stoi(need("label"));
        if (s.label <= 0 || s.label > 65535) throw Error(ErrorCode::Parse, "phantom: label must be in 1..65535");
        if (auto it = attrs.find("offset_hu"); it != attrs.end()) s.offset_hu = std::stod(it->second);
        spec.shapes.push_back(s);
    }
    return spec;
}

std::string format_phantom_spec(const PhantomSpec& spec) {
    std::ostringstream out;
    out.precision(17);
    auto v3 = [&](const std::array<double, 3>& v) {
        std::ostringstream s;
        s.precision(17);
        s << v[0] << ',' << v[1] << ',' << v[2];
        return s.str();
    };
    out << "extent = " << spec.extent.x << ' ' << spec.extent.y << ' ' << spec.extent.z << '\n';
    out << "spacing = " << spec.spacing[0] << ' ' << spec.spacing[1] << ' ' << spec.spacing[2] << '\n';
    out << "background_hu = " << spec.background_hu << '\n';
    out << "noise_sigma_hu = " << spec.noise_sigma_hu << '\n';
    for (const auto& s : spec.shapes) {
        out << "shape = " << kind_name(s.kind) << " label=" << s.label;
        switch (s.kind) {
            case ShapeKind::Sphere: out << " center=" << v3(s.center) << " radius=" << s.radius; break;
            case ShapeKind::Box: out << " center=" << v3(s.center) << " half=" << v3(s.half_size); break;
            case ShapeKind::Tube:
                out << " p0=" << v3(s.p0) << " p1=" << v3(s.p1) << " radius=" << s.radius;
                break;
        }
        out << " offset_hu=" << s.offset_hu << '\n';
    }
    return out.str();
}

std::pair<Volume, LabelMap> make_phantom(const PhantomSpec& spec, std::uint64_t rng_seed) {
    Volume v;
    v.spacing = spec.spacing;
    v.unit = IntensityUnit::RawHU;
    v.data = Grid<float>(spec.extent, static_cast<float>(spec.background_hu));
    LabelMap l;
    l.labels = Grid<Label>(spec.extent, 0);
    l.names[0] = "background";

    for (const auto& s : spec.shapes) {
        l.names[s.label] = std::string(kind_name(s.kind)) + "_" + std::to_string(s.label);
        const auto [lo, hi] = bounds(s, spec.extent);
        const auto value = static_cast<float>(spec.background_hu + s.offset_hu);
        for (int z = lo.z; z < hi.z; ++z)
            for (int y = lo.y; y < hi.y; ++y)
                for (int x = lo.x; x < hi.x; ++x) {
                    if (inside(s, {static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)})) {
                        v.data(x, y, z) = value;
                        l.labels(x, y, z) = static_cast<Label>(s.label);
                    }
                }
    }

    if (spec.noise_sigma_hu > 0) {
        std::mt19937_64 rng(rng_seed);
        std::normal_distribution<double> noise(0.0, spec.noise_sigma_hu);
        for (auto& x : v.data.values()) x = static_cast<float>(x + noise(rng));
    }
    return {std::move(v), std::move(l)};
}

PhantomSpec random_phantom_spec(std::uint64_t rng_seed, const RandomPhantomOptions& o) {
    std::mt19937_64 rng(rng_seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

    PhantomSpec spec;
    spec.extent = o.extent;
    spec.noise_sigma_hu = o.noise_sigma_hu;
    spec.background_hu = uniform(-150.0, 50.0);

    const int n = std::uniform_int_distribution<int>(o.min_shapes, o.max_shapes)(rng);
    std::vector<Capsule> placed;
    std::vector<double> used_offsets;
    for (int label = 1; label <= n; ++label) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            PhantomShape s;
            s.label = label;
            const double kind_draw = unit(rng);
            const double margin = 2.0;
            if (kind_draw < o.tube_probability) {
                s.kind = ShapeKind::Tube;
                s.radius = uniform(3.0, std::max(3.0, o.max_radius * 0.55));
                const double len = uniform(0.5, 0.95) * std::min({o.extent.x, o.extent.y, o.extent.z});
                std::array<double, 3> dir{};
                if (unit(rng) < 0.5) {
                    dir[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 2)(rng))] = 1.0;
                } else {
                    std::normal_distribution<double> g;
                    double norm = 0;
                    for (auto& d : dir) {
                        d = g(rng);
                        norm += d * d;
                    }
                    norm = std::sqrt(std::max(norm, 1e-12));
                    for (auto& d : dir) d /= norm;
                }
                for (std::size_t i = 0; i < 3; ++i) {
                    const double half = 0.5 * len * std::abs(dir[i]);
                    const double lo = s.radius + margin + half;
                    const double hi = o.extent[static_cast<int>(i)] - 1 - s.radius - margin - half;
                    const double c = lo < hi ? uniform(lo, hi) : 0.5 * (o.extent[static_cast<int>(i)] - 1);
                    s.p0[i] = c - 0.5 * len * dir[i];
                    s.p1[i] = c + 0.5 * len * dir[i];
                }
            } else if (kind_draw < o.tube_probability + o.box_probability) {
                s.kind = ShapeKind::Box;
                for (std::size_t i = 0; i < 3; ++i) {
                    s.half_size[i] = uniform(o.min_radius * 0.7, o.max_radius * 0.9);
                    const double lo = s.half_size[i] + margin;
                    const double hi = o.extent[static_cast<int>(i)] - 1 - s.half_size[i] - margin;
                    s.center[i] = lo < hi ? uniform(lo, hi) : 0.5 * (o.extent[static_cast<int>(i)] - 1);
                }
            } else {
                s.kind = ShapeKind::Sphere;
                s.radius = uniform(o.min_radius, o.max_radius);
                for (std::size_t i = 0; i < 3; ++i) {
                    const double lo = s.radius + margin;
                    const double hi = o.extent[static_cast<int>(i)] - 1 - s.radius - margin;
                    s.center[i] = lo < hi ? uniform(lo, hi) : 0.5 * (o.extent[static_cast<int>(i)] - 1);
                }
            }
            const Capsule c = capsule_of(s);
            const bool clear = std::all_of(placed.begin(), placed.end(),
                                           [&](const Capsule& p) { return capsule_gap(c, p) > 2.0; });
            if (!clear) continue;

            // Contrast against background, and distinct from the other shapes.
            double offset = 0;
            for (int k = 0; k < 50; ++k) {
                offset = uniform(o.min_contrast_hu, o.max_contrast_hu) * (unit(rng) < 0.3 ? -1.0 : 1.0);
                const bool distinct = std::all_of(used_offsets.begin(), used_offsets.end(),
                                                  [&](double u) { return std::abs(u - offset) > 100.0; });
                if (distinct) break;
            }
            s.offset_hu = offset;
            used_offsets.push_back(offset);
            placed.push_back(c);
            spec.shapes.push_back(s);
            break;
        }
    }
    return spec;
}

PhantomSpec tube_phantom_spec(std::uint64_t rng_seed, int patch_side, int length_in_patches) {
    std::mt19937_64 rng(rng_seed ^ 0x51ed2701f3a5c9b1ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

    const int length = patch_side * length_in_patches;
    const int margin = patch_side / 4;
    const int side = patch_side + patch_side / 2;
    PhantomSpec spec;
    spec.extent = {length + 2 * margin, side, side};
    spec.background_hu = uniform(-150.0, 50.0);

    PhantomShape tube;
    tube.kind = ShapeKind::Tube;
    tube.label = 1;
    tube.radius = uniform(4.0, 6.0);
    const double cy = uniform(side * 0.4, side * 0.6);
    const double cz = uniform(side * 0.4, side * 0.6);
    tube.p0 = {static_cast<double>(margin), cy, cz};
    tube.p1 = {static_cast<double>(margin + length - 1), cy, cz};
    tube.offset_hu = uniform(250.0, 550.0);
    spec.shapes.push_back(tube);

    // Two small distractor spheres away from the tube.
    for (int label = 2; label <= 3; ++label) {
        PhantomShape s;
        s.kind = ShapeKind::Sphere;
        s.label = label;
        s.radius = uniform(3.0, 4.0);
        s.center = {uniform(margin, margin + length), cy < side / 2.0 ? side - 6.0 : 5.0,
                    cz < side / 2.0 ? side - 6.0 : 5.0};
        s.offset_hu = -tube.offset_hu * uniform(0.5, 0.9);
        spec.shapes.push_back(s);
    }
    return spec;
}

}  // namespace promptseg
