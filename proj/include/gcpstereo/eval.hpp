#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gcpstereo/error.hpp"
#include "gcpstereo/image.hpp"
#include "gcpstereo/net.hpp"
#include "gcpstereo/pipeline.hpp"

namespace gcps {

/// Default bad-pixel threshold in pixels.
inline constexpr double kDefaultTau = 3.0;

/// Fraction of known ground-truth pixels with |disp - gt| > tau.
inline double error_rate(const DisparityMap& d, const GroundTruth& gt, double tau = kDefaultTau) {
    detail::require_same_size(d.width, d.height, gt.width, gt.height, "error_rate");
    std::size_t known = 0;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < gt.disp.size(); ++i) {
        if (!gt.disp[i]) continue;
        ++known;
        if (std::abs(static_cast<double>(d.disp[i]) - static_cast<double>(*gt.disp[i])) > tau) ++bad;
    }
    if (known == 0) throw DegenerateInput("ground truth has no known pixels");
    return static_cast<double>(bad) / static_cast<double>(known);
}

struct FrameReport {
    std::string frame_id;
    double error_baseline = 0.0;
    double error_refined = 0.0;
    /// error_baseline - error_refined, as a fraction (x100 for points).
    double improvement = 0.0;
};

struct ReportSummary {
    double mean_baseline = 0.0;
    double mean_refined = 0.0;
    double mean_improvement = 0.0;
};

using FramePipeline = std::function<DisparityMap(const Frame&)>;

/// Runs both pipelines on every frame. Failures are rethrown with the frame id.
inline std::vector<FrameReport> per_frame_report(std::span<const Frame> frames, const FramePipeline& baseline,
                                                 const FramePipeline& refined, double tau = kDefaultTau) {
    std::vector<FrameReport> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        try {
            FrameReport r;
            r.frame_id = f.id;
            r.error_baseline = error_rate(baseline(f), f.gt, tau);
            r.error_refined = error_rate(refined(f), f.gt, tau);
            r.improvement = r.error_baseline - r.error_refined;
            out.push_back(r);
        } catch (const std::exception& e) {
            throw Error("frame " + f.id + ": " + e.what());
        }
    }
    return out;
}

inline ReportSummary summarize(std::span<const FrameReport> reports) {
    ReportSummary s;
    if (reports.empty()) return s;
    for (const auto& r : reports) {
        s.mean_baseline += r.error_baseline;
        s.mean_refined += r.error_refined;
        s.mean_improvement += r.improvement;
    }
    const double n = static_cast<double>(reports.size());
    s.mean_baseline /= n;
    s.mean_refined /= n;
    s.mean_improvement /= n;
    return s;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_frames_csv(std::ostream& out, std::span<const FrameReport> reports, bool with_refined = true) {
    out << "frame_id,error_baseline,error_refined,improvement\n";
    for (const auto& r : reports) {
        out << r.frame_id << ',' << format_number(r.error_baseline) << ',';
        if (with_refined) out << format_number(r.error_refined) << ',' << format_number(r.improvement);
        else out << ',';
        out << '\n';
    }
}

inline void write_frames_csv(const std::string& path, std::span<const FrameReport> reports, bool with_refined = true) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_frames_csv(out, reports, with_refined);
    if (!out) throw IoError("writing '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Threshold sweep

struct ThetaSweepPoint {
    double theta = 0.0;
    double mean_error = 0.0;
};

/// Mean refined-pipeline error per theta; cost and confidence volumes are
/// computed once per frame. The refinement costs come from cfg.refine.
inline std::vector<ThetaSweepPoint> sweep_theta(std::span<const Frame> frames, std::span<const double> thetas,
                                                const NetworkParams<float>& params, const PipelineConfig& cfg,
                                                double tau = kDefaultTau) {
    if (thetas.empty()) throw ConfigError("theta sweep needs at least one theta");
    for (double t : thetas) {
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("theta " + format_number(t) + " outside [0, 1]");
    }
    if (frames.empty()) throw DegenerateInput("theta sweep needs at least one frame");
    std::vector<ThetaSweepPoint> out(thetas.size());
    for (std::size_t i = 0; i < thetas.size(); ++i) out[i].theta = thetas[i];
    for (const auto& f : frames) {
        try {
            const PreparedFrame prepared = prepare_frame(f.left, f.right, params, cfg);
            for (std::size_t i = 0; i < thetas.size(); ++i) {
                const auto m = match_prepared(prepared, static_cast<float>(thetas[i]), cfg);
                out[i].mean_error += error_rate(m.disparity, f.gt, tau);
            }
        } catch (const std::exception& e) {
            throw Error("frame " + f.id + ": " + e.what());
        }
    }
    for (auto& p : out) p.mean_error /= static_cast<double>(frames.size());
    return out;
}

/// Index of the lowest mean error (first one on ties).
inline std::size_t sweep_argmin(std::span<const ThetaSweepPoint> sweep) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        if (sweep[i].mean_error < sweep[best].mean_error) best = i;
    }
    return best;
}

inline void write_sweep_csv(std::ostream& out, std::span<const ThetaSweepPoint> sweep) {
    out << "theta,mean_error\n";
    for (const auto& p : sweep) out << format_number(p.theta) << ',' << format_number(p.mean_error) << '\n';
}

inline void write_sweep_csv(const std::string& path, std::span<const ThetaSweepPoint> sweep) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_sweep_csv(out, sweep);
    if (!out) throw IoError("writing '" + path + "' failed");
}

}  // namespace gcps
