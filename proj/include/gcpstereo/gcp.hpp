#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcpstereo/cost.hpp"
#include "gcpstereo/error.hpp"
#include "gcpstereo/imageio.hpp"
#include "gcpstereo/net.hpp"

namespace gcps {

/// Per-pixel maximum confidence and the disparity attaining it.
struct ConfidenceMaxima {
    int width = 0;
    int height = 0;
    int d_max = 0;
    std::vector<float> cof_c;
    std::vector<std::int32_t> cof_d;
};

struct GcpMask {
    int width = 0;
    int height = 0;
    int d_max = 0;
    float theta = 0.0f;
    std::vector<float> cof_c;
    std::vector<std::int32_t> cof_d;
    std::vector<bool> is_gcp;

    std::size_t count() const {
        std::size_t n = 0;
        for (bool b : is_gcp) n += b ? 1 : 0;
        return n;
    }
};

struct RefineConfig {
    float theta = 0.60f;
    float c_hi = 200.0f;
    float c_low = 1.3f;

    void validate() const {
        if (!(theta >= 0.0f && theta <= 1.0f)) throw ConfigError("theta must lie in [0, 1]");
        if (!(c_low < c_hi)) throw ConfigError("need c_low < c_hi");
    }
};

/// Threshold and refinement costs used with each initial cost.
inline RefineConfig default_refine_config(CostKind kind) {
    if (kind == CostKind::SAD) return {0.55f, 5.0f, 0.001f};
    return {0.60f, 200.0f, 1.3f};
}

/// Max and argmax over disparities; ties resolve to the smallest disparity.
inline ConfidenceMaxima max_confidence(const ConfidenceVolume& vol) {
    ConfidenceMaxima m;
    m.width = vol.width;
    m.height = vol.height;
    m.d_max = vol.d_max;
    const std::size_t n = static_cast<std::size_t>(vol.width) * vol.height;
    m.cof_c.resize(n);
    m.cof_d.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        const auto c = vol.pixel(p);
        std::size_t best = 0;
        for (std::size_t d = 1; d < c.size(); ++d) {
            if (c[d] > c[best]) best = d;
        }
        m.cof_c[p] = c[best];
        m.cof_d[p] = static_cast<std::int32_t>(best);
    }
    return m;
}

/// A pixel is a GCP iff cof_c > theta (strict).
inline GcpMask select_gcps(const ConfidenceMaxima& m, float theta) {
    if (!(theta >= 0.0f && theta <= 1.0f)) throw ConfigError("theta must lie in [0, 1]");
    GcpMask mask;
    mask.width = m.width;
    mask.height = m.height;
    mask.d_max = m.d_max;
    mask.theta = theta;
    mask.cof_c = m.cof_c;
    mask.cof_d = m.cof_d;
    mask.is_gcp.resize(m.cof_c.size());
    for (std::size_t p = 0; p < m.cof_c.size(); ++p) mask.is_gcp[p] = m.cof_c[p] > theta;
    return mask;
}

/// Non-GCP pixels: every disparity set to c_hi. GCP pixels: the cost at
/// cof_d set to c_low, all other disparities untouched.
inline CostVolume refine_costs(const CostVolume& c, const GcpMask& mask, const RefineConfig& cfg) {
    cfg.validate();
    detail::require_same_size(c.width, c.height, mask.width, mask.height, "gcp mask");
    if (mask.d_max != c.d_max) throw DimensionMismatch("gcp mask and cost volume disagree on d_max");
    CostVolume out = c;
    out.kind = CostKind::Refined;
    for (std::size_t p = 0; p < c.pixel_count(); ++p) {
        auto costs = out.pixel(p);
        if (mask.is_gcp[p]) {
            costs[static_cast<std::size_t>(mask.cof_d[p])] = cfg.c_low;
        } else {
            std::fill(costs.begin(), costs.end(), cfg.c_hi);
        }
    }
    return out;
}

inline void save_gcp_mask_png(const GcpMask& mask, const std::string& path) {
    save_mask_png(mask.width, mask.height, mask.is_gcp, path);
}

}  // namespace gcps
