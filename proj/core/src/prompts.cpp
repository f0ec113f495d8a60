#include "promptseg/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace promptseg {

std::string_view polarity_name(Polarity p) {
    return p == Polarity::Positive ? "positive" : "negative";
}

Polarity parse_polarity(std::string_view s) {
    if (s == "positive" || s == "pos" || s == "+" || s == "1") return Polarity::Positive;
    if (s == "negative" || s == "neg" || s == "-" || s == "0") return Polarity::Negative;
    throw Error(ErrorCode::Parse, "unknown click polarity '" + std::string(s) + "'");
}

void splat_gaussian(Grid<float>& map, const Index3& c, double sigma) {
    const auto& e = map.extent();
    const double cutoff = 3.0 * sigma;
    const int r = static_cast<int>(std::floor(cutoff));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int z = std::max(0, c.z - r); z <= std::min(e.z - 1, c.z + r); ++z) {
        for (int y = std::max(0, c.y - r); y <= std::min(e.y - 1, c.y + r); ++y) {
            for (int x = std::max(0, c.x - r); x <= std::min(e.x - 1, c.x + r); ++x) {
                const double d2 = double(x - c.x) * (x - c.x) + double(y - c.y) * (y - c.y) +
                                  double(z - c.z) * (z - c.z);
                if (d2 > cutoff * cutoff) continue;
                const auto v = static_cast<float>(std::exp(-d2 * inv));
                auto& dst = map(x, y, z);
                dst = std::max(dst, v);
            }
        }
    }
}

PromptMaps render_clicks(std::span<const Click> clicks, const Extent3& patch_size, double sigma_vox) {
    if (!(sigma_vox > 0)) throw Error(ErrorCode::InvalidInput, "prompt sigma must be positive");
    PromptMaps maps{Grid<float>(patch_size), Grid<float>(patch_size), Grid<float>(patch_size)};
    for (const auto& c : clicks) {
        if (!patch_size.contains(c.position)) {
            throw Error(ErrorCode::InvalidInput, "click lies outside the patch");
        }
        splat_gaussian(c.polarity == Polarity::Positive ? maps.p_map : maps.n_map, c.position, sigma_vox);
    }
    return maps;
}

CompositeMap compose(const Grid<float>& p, const Grid<float>& n, const Grid<float>& y) {
    require_same_extent(p, n, "compose");
    require_same_extent(p, y, "compose");
    CompositeMap m;
    m.extent = p.extent();
    m.values.reserve(3 * p.size());
    m.values.insert(m.values.end(), p.values().begin(), p.values().end());
    m.values.insert(m.values.end(), n.values().begin(), n.values().end());
    m.values.insert(m.values.end(), y.values().begin(), y.values().end());
    return m;
}

CompositeMap compose(const PromptMaps& maps) { return compose(maps.p_map, maps.n_map, maps.y_map); }

PromptMaps split(const CompositeMap& m) {
    if (m.values.size() != 3 * m.voxels()) {
        throw Error(ErrorCode::ShapeMismatch, "composite map must have exactly three channels");
    }
    auto channel = [&](int c) {
        auto s = m.channel(c);
        return Grid<float>(m.extent, std::vector<float>(s.begin(), s.end()));
    };
    return {channel(0), channel(1), channel(2)};
}

RFFEncoder RFFEncoder::create(int m, std::uint64_t rng_seed, double scale, int d) {
    if (m < 1 || d < 1) throw Error(ErrorCode::InvalidInput, "RFF sizes must be positive");
    RFFEncoder enc;
    enc.m = m;
    enc.d = d;
    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> g(0.0, scale);
    enc.b.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(d));
    for (auto& v : enc.b) v = g(rng);
    enc.e_pos.assign(2 * static_cast<std::size_t>(m), 0.0);
    enc.e_neg.assign(2 * static_cast<std::size_t>(m), 0.0);
    return enc;
}

std::array<double, 3> normalize_position(const Index3& p, const Extent3& size) {
    std::array<double, 3> v{};
    for (int i = 0; i < 3; ++i) v[static_cast<std::size_t>(i)] = 2.0 * (p[i] + 0.5) / size[i] - 1.0;
    return v;
}

std::vector<double> rff_encode(const RFFEncoder& enc, std::span<const double> v, Polarity polarity) {
    if (static_cast<int>(v.size()) != enc.d) {
        throw Error(ErrorCode::ShapeMismatch, "RFF input dimension mismatch");
    }
    for (double c : v) {
        if (!(c >= -1.0 && c <= 1.0)) {
            throw Error(ErrorCode::InvalidInput, "RFF input must be normalized to [-1, 1]");
        }
    }
    const auto& e = polarity == Polarity::Positive ? enc.e_pos : enc.e_neg;
    std::vector<double> out(2 * static_cast<std::size_t>(enc.m));
    for (int j = 0; j < enc.m; ++j) {
        double proj = 0;
        for (int k = 0; k < enc.d; ++k) {
            proj += enc.b[static_cast<std::size_t>(j * enc.d + k)] * v[static_cast<std::size_t>(k)];
        }
        const double angle = 2.0 * std::numbers::pi * proj;
        out[2 * static_cast<std::size_t>(j)] = std::cos(angle) + e[2 * static_cast<std::size_t>(j)];
        out[2 * static_cast<std::size_t>(j) + 1] = std::sin(angle) + e[2 * static_cast<std::size_t>(j) + 1];
    }
    return out;
}

std::string format_clicks(std::span<const Click> clicks) {
    std::string out;
    for (const auto& c : clicks) {
        out += std::to_string(c.position.x) + ' ' + std::to_string(c.position.y) + ' ' +
               std::to_string(c.position.z) + ' ' + std::string(polarity_name(c.polarity)) + '\n';
    }
    return out;
}

std::vector<Click> parse_clicks(std::string_view text) {
    std::vector<Click> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        Click c;
        std::string pol;
        if (!(ls >> c.position.x)) continue;
        if (!(ls >> c.position.y >> c.position.z >> pol)) {
            throw Error(ErrorCode::Parse, "click line " + std::to_string(lineno) + ": expected 'x y z polarity'");
        }
        c.polarity = parse_polarity(pol);
        out.push_back(c);
    }
    return out;
}

}  // namespace promptseg
