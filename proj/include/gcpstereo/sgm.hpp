#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "gcpstereo/cost.hpp"
#include "gcpstereo/error.hpp"
#include "gcpstereo/image.hpp"

namespace gcps {

/// Path step r; the predecessor of p along the path is p - r.
struct Direction {
    int dx = 0;
    int dy = 0;

    bool operator==(const Direction&) const = default;
};

/// The 8 unit steps followed by the 8 knight moves (+-1,+-2), (+-2,+-1).
inline std::vector<Direction> default_directions() {
    return {{1, 0},  {-1, 0}, {0, 1},  {0, -1}, {1, 1},  {-1, -1}, {1, -1}, {-1, 1},
            {2, 1},  {-2, -1}, {1, 2}, {-1, -2}, {2, -1}, {-2, 1},  {1, -2}, {-1, 2}};
}

struct SgmConfig {
    double p1 = 4.0;
    double p2 = 128.0;
    std::vector<Direction> directions = default_directions();

    void validate() const {
        if (!(p1 >= 0.0 && p1 <= p2) || !std::isfinite(p2)) throw ConfigError("need 0 <= p1 <= p2 (finite)");
        if (directions.empty()) throw ConfigError("SGM needs at least one direction");
        for (std::size_t i = 0; i < directions.size(); ++i) {
            if (directions[i].dx == 0 && directions[i].dy == 0) throw ConfigError("zero SGM direction");
            if (std::abs(directions[i].dy) > 8) throw ConfigError("SGM direction step too long");
            for (std::size_t j = 0; j < i; ++j) {
                if (directions[i] == directions[j]) throw ConfigError("duplicate SGM direction");
            }
        }
    }
};

/// Smoothness penalties tied to the initial cost kind.
inline SgmConfig default_sgm_config(CostKind kind) {
    SgmConfig cfg;
    if (kind == CostKind::SAD) {
        cfg.p1 = 1.0;
        cfg.p2 = 14.0;
    } else {
        cfg.p1 = 4.0;
        cfg.p2 = 128.0;
    }
    return cfg;
}

/// Double-precision (pixel, disparity) volume, same layout as CostVolume.
struct PathVolume {
    int width = 0;
    int height = 0;
    int d_max = 0;
    std::vector<double> values;

    PathVolume() = default;
    PathVolume(int w, int h, int dmax)
        : width(w), height(h), d_max(dmax), values(static_cast<std::size_t>(w) * h * (dmax + 1), 0.0) {}

    std::size_t index(int x, int y, int d) const {
        return (static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(d_max + 1) + d;
    }
    double& at(int x, int y, int d) { return values[index(x, y, d)]; }
    double at(int x, int y, int d) const { return values[index(x, y, d)]; }
};

/// Averaged path costs L(p,d).
using AggregatedVolume = PathVolume;

/// Throws if path sums could exceed the range where doubles hold integers
/// exactly (2^53), for the longest path in this volume.
inline void check_accumulator_range(const CostVolume& c, const SgmConfig& cfg) {
    const float hi = c.cost.empty() ? 0.0f : *std::max_element(c.cost.begin(), c.cost.end());
    const double steps = static_cast<double>(std::max(c.width, c.height));
    const double bound = steps * (static_cast<double>(hi) + cfg.p2);
    if (!(bound < 9007199254740992.0)) throw ConfigError("SGM path sums exceed exact double range");
}

namespace detail {

/// Evaluates L_r(p, .) for every pixel in an order where p - r is always
/// done first, calling sink(x, y, values) once per pixel.
template <class Sink>
void scan_direction(const CostVolume& c, Direction r, double p1, double p2, Sink&& sink) {
    if (r.dx == 0 && r.dy == 0) throw ConfigError("zero SGM direction");
    const int W = c.width;
    const int H = c.height;
    const int D = c.d_max + 1;
    const int ring = std::abs(r.dy) + 1;
    std::vector<double> rows(static_cast<std::size_t>(ring) * W * D);
    auto slot = [&](int x, int y) { return rows.data() + (static_cast<std::size_t>(y % ring) * W + x) * D; };
    const double inf = std::numeric_limits<double>::infinity();

    const int y_begin = r.dy >= 0 ? 0 : H - 1;
    const int y_step = r.dy >= 0 ? 1 : -1;
    const int x_begin = r.dx >= 0 ? 0 : W - 1;
    const int x_step = r.dx >= 0 ? 1 : -1;
    for (int y = y_begin; y >= 0 && y < H; y += y_step) {
        for (int x = x_begin; x >= 0 && x < W; x += x_step) {
            double* cur = slot(x, y);
            const auto cost = c.pixel(static_cast<std::size_t>(y) * W + x);
            const int px = x - r.dx;
            const int py = y - r.dy;
            if (px < 0 || px >= W || py < 0 || py >= H) {
                for (int d = 0; d < D; ++d) cur[d] = cost[d];
            } else {
                const double* prev = slot(px, py);
                const double prev_min = *std::min_element(prev, prev + D);
                for (int d = 0; d < D; ++d) {
                    double best = std::min(prev[d], prev_min + p2);
                    best = std::min(best, (d > 0 ? prev[d - 1] : inf) + p1);
                    best = std::min(best, (d + 1 < D ? prev[d + 1] : inf) + p1);
                    cur[d] = cost[d] + best;
                }
            }
            sink(x, y, static_cast<const double*>(cur));
        }
    }
}

}  // namespace detail

/// L_r(p,d) = C(p,d) + min(L_r(p-r,d), L_r(p-r,d+-1) + P1, min_k L_r(p-r,k) + P2),
/// with L_r(p,.) = C(p,.) where p - r is off the image.
inline PathVolume path_cost(const CostVolume& c, Direction r, const SgmConfig& cfg) {
    if (r.dx == 0 && r.dy == 0) throw ConfigError("zero SGM direction");
    check_accumulator_range(c, cfg);
    PathVolume out(c.width, c.height, c.d_max);
    const int D = c.d_max + 1;
    detail::scan_direction(c, r, cfg.p1, cfg.p2, [&](int x, int y, const double* v) {
        std::copy(v, v + D, out.values.begin() + static_cast<std::ptrdiff_t>(out.index(x, y, 0)));
    });
    return out;
}

/// Mean of the path volumes over all configured directions.
inline AggregatedVolume aggregate(const CostVolume& c, const SgmConfig& cfg) {
    cfg.validate();
    check_accumulator_range(c, cfg);
    AggregatedVolume out(c.width, c.height, c.d_max);
    const int D = c.d_max + 1;
    for (const auto& r : cfg.directions) {
        detail::scan_direction(c, r, cfg.p1, cfg.p2, [&](int x, int y, const double* v) {
            double* dst = out.values.data() + out.index(x, y, 0);
            for (int d = 0; d < D; ++d) dst[d] += v[d];
        });
    }
    const double inv = 1.0 / static_cast<double>(cfg.directions.size());
    for (auto& v : out.values) v *= inv;
    return out;
}

/// Per-pixel argmin; ties go to the smallest disparity.
inline DisparityMap wta(const AggregatedVolume& a) {
    DisparityMap out(a.width, a.height, a.d_max);
    const std::size_t D = static_cast<std::size_t>(a.d_max) + 1;
    for (std::size_t p = 0; p < out.disp.size(); ++p) {
        const double* v = a.values.data() + p * D;
        std::size_t best = 0;
        for (std::size_t d = 1; d < D; ++d) {
            if (v[d] < v[best]) best = d;
        }
        out.disp[p] = static_cast<std::int32_t>(best);
    }
    return out;
}

inline DisparityMap sgm_disparity(const CostVolume& c, const SgmConfig& cfg) { return wta(aggregate(c, cfg)); }

enum class Neighborhood { Four, Eight };

/// Sum of data costs plus P1 / P2 for every ordered neighbour pair whose
/// disparities differ by exactly 1 / more than 1 (each undirected pair counts
/// twice).
inline double energy(const DisparityMap& d, const CostVolume& c, const SgmConfig& cfg,
                     Neighborhood nb = Neighborhood::Eight) {
    detail::require_same_size(d.width, d.height, c.width, c.height, "energy");
    if (!d.valid() || d.d_max > c.d_max) throw DimensionMismatch("disparity values outside the cost volume");
    static constexpr int k8[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
    const int n = nb == Neighborhood::Four ? 4 : 8;
    double e = 0.0;
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            const int dp = d.at(x, y);
            e += c.at(x, y, dp);
            for (int k = 0; k < n; ++k) {
                const int qx = x + k8[k][0];
                const int qy = y + k8[k][1];
                if (qx < 0 || qx >= d.width || qy < 0 || qy >= d.height) continue;
                const int diff = std::abs(dp - d.at(qx, qy));
                if (diff == 1) {
                    e += cfg.p1;
                } else if (diff > 1) {
                    e += cfg.p2;
                }
            }
        }
    }
    return e;
}

}  // namespace gcps
