#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "gcpstereo/cost.hpp"
#include "gcpstereo/error.hpp"
#include "gcpstereo/gcp.hpp"
#include "gcpstereo/image.hpp"
#include "gcpstereo/imageio.hpp"
#include "gcpstereo/net.hpp"
#include "gcpstereo/sgm.hpp"

namespace gcps {

/// Everything needed to run a baseline or GCP-refined match.
struct PipelineConfig {
    CostKind cost_kind = CostKind::Census;
    WindowSpec window{4};
    int d_max = 228;
    SgmConfig sgm = default_sgm_config(CostKind::Census);
    RefineConfig refine = default_refine_config(CostKind::Census);
    TrainConfig train;
    std::string model_path;

    static PipelineConfig defaults(CostKind kind) {
        PipelineConfig cfg;
        cfg.cost_kind = kind;
        cfg.sgm = default_sgm_config(kind);
        cfg.refine = default_refine_config(kind);
        return cfg;
    }

    void validate() const {
        if (cost_kind == CostKind::Refined) throw ConfigError("cost_kind must be sad or census");
        if (window.radius < 0) throw ConfigError("window_radius must be non-negative");
        if (cost_kind == CostKind::Census && window.radius > kMaxCensusRadius) {
            throw ConfigError("census window_radius must be at most " + std::to_string(kMaxCensusRadius));
        }
        if (d_max < 0) throw ConfigError("d_max must be non-negative");
        sgm.validate();
        refine.validate();
        train.validate();
    }
};

struct StereoInput {
    GrayImage left;
    GrayImage right;
};

/// Normalized copies of both views.
inline StereoInput normalized(const GrayImage& left, const GrayImage& right) {
    detail::require_same_size(left.width, left.height, right.width, right.height, "stereo pair");
    return {normalize(left), normalize(right)};
}

/// Cost volume + SGM, no GCPs. Inputs are raw images.
inline DisparityMap match_baseline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg) {
    cfg.validate();
    const auto in = normalized(left, right);
    const CostVolume cost = compute_cost(cfg.cost_kind, in.left, in.right, cfg.d_max, cfg.window);
    return sgm_disparity(cost, cfg.sgm);
}

/// Per-frame state that does not depend on theta.
struct PreparedFrame {
    CostVolume cost;
    ConfidenceVolume confidence;
    ConfidenceMaxima maxima;
};

inline PreparedFrame prepare_frame(const GrayImage& left, const GrayImage& right, const NetworkParams<float>& params,
                                   const PipelineConfig& cfg) {
    cfg.validate();
    const auto in = normalized(left, right);
    PreparedFrame f;
    f.cost = compute_cost(cfg.cost_kind, in.left, in.right, cfg.d_max, cfg.window);
    f.confidence = confidence_volume(params, in.left, in.right, cfg.d_max);
    f.maxima = max_confidence(f.confidence);
    return f;
}

struct RefinedMatch {
    DisparityMap disparity;
    GcpMask mask;
};

/// GCP selection at `theta`, cost refinement and SGM with the penalties of
/// the initial cost kind.
inline RefinedMatch match_prepared(const PreparedFrame& f, float theta, const PipelineConfig& cfg) {
    RefineConfig rc = cfg.refine;
    rc.theta = theta;
    RefinedMatch out;
    out.mask = select_gcps(f.maxima, theta);
    const CostVolume refined = refine_costs(f.cost, out.mask, rc);
    out.disparity = sgm_disparity(refined, cfg.sgm);
    return out;
}

inline DisparityMap match_refined(const GrayImage& left, const GrayImage& right, const NetworkParams<float>& params,
                                  const PipelineConfig& cfg) {
    return match_prepared(prepare_frame(left, right, params, cfg), cfg.refine.theta, cfg).disparity;
}

// ---------------------------------------------------------------------------
// Datasets: NNNNNN_left.png, NNNNNN_right.png, NNNNNN_gt.png

struct Frame {
    std::string id;
    GrayImage left;
    GrayImage right;
    GroundTruth gt;
};

struct FramePaths {
    std::string id;
    std::filesystem::path left;
    std::filesystem::path right;
    std::filesystem::path gt;
};

/// Frame ids with a complete left/right/gt triple, sorted by id.
inline std::vector<FramePaths> list_dataset(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw IoError("data directory '" + dir.string() + "' does not exist");
    }
    static const std::regex pattern(R"((\d+)_left\.png)");
    std::map<std::string, FramePaths> found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        std::smatch m;
        if (!std::regex_match(name, m, pattern)) continue;
        const std::string id = m[1];
        FramePaths fp{id, entry.path(), dir / (id + "_right.png"), dir / (id + "_gt.png")};
        if (std::filesystem::exists(fp.right) && std::filesystem::exists(fp.gt)) found.emplace(id, fp);
    }
    std::vector<FramePaths> out;
    for (auto& [id, fp] : found) out.push_back(fp);
    return out;
}

inline Frame load_frame(const FramePaths& fp) {
    Frame f;
    f.id = fp.id;
    f.left = load_gray(fp.left.string());
    f.right = load_gray(fp.right.string());
    detail::require_same_size(f.left.width, f.left.height, f.right.width, f.right.height,
                              ("frame " + fp.id).c_str());
    f.gt = load_kitti_gt(fp.gt.string(), std::make_pair(f.left.width, f.left.height));
    return f;
}

inline std::vector<Frame> load_dataset(const std::filesystem::path& dir) {
    std::vector<Frame> frames;
    for (const auto& fp : list_dataset(dir)) frames.push_back(load_frame(fp));
    return frames;
}

/// Writes a frame in the dataset naming convention (8-bit views, KITTI GT).
inline void save_frame(const std::filesystem::path& dir, const std::string& id, const GrayImage& left,
                       const GrayImage& right, const GroundTruth& gt) {
    std::filesystem::create_directories(dir);
    save_gray_png(left, (dir / (id + "_left.png")).string());
    save_gray_png(right, (dir / (id + "_right.png")).string());
    save_kitti_gt(gt, (dir / (id + "_gt.png")).string());
}

}  // namespace gcps
