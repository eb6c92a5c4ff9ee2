#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "gcpstereo/error.hpp"
#include "gcpstereo/image.hpp"

namespace gcps {

/// Parameters of a two-layer random-dot scene: a textured background plane
/// and one textured rectangle in front of it.
struct RandomDotSpec {
    int width = 32;
    int height = 32;
    int background_min = 1;
    int background_max = 4;
    /// Foreground disparity = background + extra, extra drawn from this range.
    int foreground_extra_min = 2;
    int foreground_extra_max = 6;
    bool foreground = true;
    /// Std-dev of independent Gaussian noise added to each view.
    double noise_sigma = 0.02;

    int max_disparity() const { return background_max + (foreground ? foreground_extra_max : 0); }
};

struct SyntheticFrame {
    GrayImage left;
    GrayImage right;
    GroundTruth gt;
};

/// Renders both views of the scene. Left pixels whose match falls off the
/// right image have unknown ground truth; background pixels hidden behind the
/// rectangle in the right view keep their background disparity.
inline SyntheticFrame make_random_dot_stereogram(const RandomDotSpec& spec, std::mt19937_64& rng) {
    if (spec.width < 4 || spec.height < 4) throw DegenerateInput("random-dot image too small");
    if (spec.background_min < 0 || spec.background_min > spec.background_max ||
        spec.foreground_extra_min < 0 || spec.foreground_extra_min > spec.foreground_extra_max) {
        throw ConfigError("invalid random-dot disparity ranges");
    }
    const int W = spec.width;
    const int H = spec.height;
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    const int d_bg = pick(spec.background_min, spec.background_max);
    const int d_fg = spec.foreground ? d_bg + pick(spec.foreground_extra_min, spec.foreground_extra_max) : d_bg;

    // Textures are indexed in left-image coordinates, widened for the shift.
    const int tw = W + spec.max_disparity() + 1;
    std::vector<float> bg(static_cast<std::size_t>(tw) * H);
    std::vector<float> fg(static_cast<std::size_t>(tw) * H);
    for (auto& v : bg) v = unit(rng);
    for (auto& v : fg) v = unit(rng);

    int rx0 = 0, rx1 = -1, ry0 = 0, ry1 = -1;
    if (spec.foreground) {
        const int rw = pick(std::max(2, W / 4), std::max(2, W / 2));
        const int rh = pick(std::max(2, H / 4), std::max(2, H / 2));
        rx0 = pick(0, W - rw);
        ry0 = pick(0, H - rh);
        rx1 = rx0 + rw - 1;
        ry1 = ry0 + rh - 1;
    }
    auto in_rect = [&](int x, int y) { return x >= rx0 && x <= rx1 && y >= ry0 && y <= ry1; };
    auto tex = [&](const std::vector<float>& t, int x, int y) {
        return t[static_cast<std::size_t>(y) * tw + std::clamp(x, 0, tw - 1)];
    };

    SyntheticFrame f{GrayImage(W, H), GrayImage(W, H), GroundTruth(W, H)};
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
    const bool noisy = spec.noise_sigma > 0.0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const bool front = in_rect(x, y);
            const int d = front ? d_fg : d_bg;
            f.left.at(x, y) = front ? tex(fg, x, y) : tex(bg, x, y);
            if (x - d >= 0) f.gt.at(x, y) = static_cast<float>(d);
        }
        for (int xr = 0; xr < W; ++xr) {
            // The rectangle occludes the background where its shifted copy lands.
            f.right.at(xr, y) = in_rect(xr + d_fg, y) ? tex(fg, xr + d_fg, y) : tex(bg, xr + d_bg, y);
        }
    }
    if (noisy) {
        for (auto* img : {&f.left, &f.right}) {
            for (auto& v : img->data) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
        }
    }
    return f;
}

inline std::vector<SyntheticFrame> make_random_dot_set(const RandomDotSpec& spec, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<SyntheticFrame> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(make_random_dot_stereogram(spec, rng));
    return out;
}

}  // namespace gcps
