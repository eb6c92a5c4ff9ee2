#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gcpstereo/config.hpp"
#include "gcpstereo/eval.hpp"
#include "gcpstereo/gcp.hpp"
#include "gcpstereo/imageio.hpp"
#include "gcpstereo/net.hpp"
#include "gcpstereo/pipeline.hpp"

namespace gcps::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Usage problem detected after argument parsing (bad paths, empty data).
class UsageError : public Error {
public:
    using Error::Error;
};

struct CommonOptions {
    std::string config;
    std::string model;
    std::string cost;
    std::optional<int> dmax;
    std::optional<float> theta;
    std::optional<std::uint64_t> seed;
};

inline PipelineConfig resolve_config(const CommonOptions& o) {
    std::optional<CostKind> kind;
    if (!o.cost.empty()) {
        kind = parse_cost_kind(o.cost);
        if (!kind) throw ConfigError("--cost must be 'sad' or 'census', got '" + o.cost + "'");
    }
    ConfigEntries entries;
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw ConfigError("cannot open config file '" + o.config + "'");
        entries = read_config_entries(in);
    }
    PipelineConfig cfg = build_config(entries, kind);
    if (o.dmax) cfg.d_max = *o.dmax;
    if (o.theta) cfg.refine.theta = *o.theta;
    if (o.seed) cfg.train.seed = *o.seed;
    if (!o.model.empty()) cfg.model_path = o.model;
    cfg.validate();
    return cfg;
}

inline std::vector<FramePaths> require_dataset(const std::string& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw UsageError("data directory '" + dir + "' does not exist");
    }
    auto frames = list_dataset(dir);
    if (frames.empty()) {
        throw UsageError("data directory '" + dir + "' has no NNNNNN_left/right/gt.png triples");
    }
    return frames;
}

inline std::string sibling_path(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    CommonOptions common;
    std::string data;
    std::string out;
    std::string log;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(a.common);
    const auto paths = require_dataset(a.data);
    std::vector<TrainingFrame> dataset;
    dataset.reserve(paths.size());
    for (const auto& fp : paths) {
        Frame f = load_frame(fp);
        dataset.push_back({std::move(f.left), std::move(f.right), std::move(f.gt)});
    }
    out << "training on " << dataset.size() << " frames, " << cfg.train.epochs << " epochs, seed "
        << cfg.train.seed << '\n';
    const TrainResult result = train(dataset, cfg.train, [&](int epoch, double loss) {
        out << "epoch " << epoch << " mean_loss " << format_number(loss) << '\n';
    });
    save_model(result.params, a.out);
    const std::string log = a.log.empty() ? a.out + ".log.csv" : a.log;
    std::ofstream csv(log);
    if (!csv) throw IoError("cannot open '" + log + "' for writing");
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        csv << e << ',' << format_number(result.loss_trace[e]) << '\n';
    }
    if (!csv) throw IoError("writing '" + log + "' failed");
    out << "wrote " << a.out << " and " << log << '\n';
    return kExitOk;
}

struct MatchArgs {
    CommonOptions common;
    std::string left;
    std::string right;
    std::string out;
    std::string preview;
    bool dump_gcp = false;
    bool dump_confidence = false;
};

inline int cmd_match(const MatchArgs& a, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(a.common);
    if ((a.dump_gcp || a.dump_confidence) && cfg.model_path.empty()) {
        throw UsageError("--dump-gcp and --dump-confidence need --model");
    }
    const GrayImage left = load_gray(a.left);
    const GrayImage right = load_gray(a.right);
    detail::require_same_size(left.width, left.height, right.width, right.height, "stereo pair");

    DisparityMap disp;
    if (cfg.model_path.empty()) {
        disp = match_baseline(left, right, cfg);
        out << "baseline " << to_string(cfg.cost_kind) << "+SGM\n";
    } else {
        const auto params = load_model(cfg.model_path);
        const PreparedFrame prepared = prepare_frame(left, right, params, cfg);
        const RefinedMatch m = match_prepared(prepared, cfg.refine.theta, cfg);
        disp = m.disparity;
        out << to_string(cfg.cost_kind) << "+GCP+SGM, theta " << format_number(cfg.refine.theta) << ", "
            << m.mask.count() << " GCPs of " << m.mask.is_gcp.size() << " pixels\n";
        if (a.dump_gcp) {
            const std::string p = sibling_path(a.out, "_gcp.png");
            save_gcp_mask_png(m.mask, p);
            out << "wrote " << p << '\n';
        }
        if (a.dump_confidence) {
            const std::string p = sibling_path(a.out, "_confidence.bin");
            std::ofstream bin(p, std::ios::binary);
            if (!bin) throw IoError("cannot open '" + p + "' for writing");
            const auto& c = prepared.confidence;
            write_volume(bin, c.width, c.height, c.d_max, c.conf);
            if (!bin) throw IoError("writing '" + p + "' failed");
            out << "wrote " << p << '\n';
        }
    }
    save_disparity_png(disp, a.out);
    if (!a.preview.empty()) save_disparity_preview(disp, a.preview);
    out << "wrote " << a.out << '\n';
    return kExitOk;
}

struct EvalArgs {
    CommonOptions common;
    std::string data;
    std::string out = "frames.csv";
    double tau = kDefaultTau;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const PipelineConfig cfg = resolve_config(a.common);
    const auto paths = require_dataset(a.data);
    std::optional<NetworkParams<float>> params;
    if (!cfg.model_path.empty()) params = load_model(cfg.model_path);

    // Without a model the refined column is left blank; reuse the baseline map.
    DisparityMap last_baseline;
    const FramePipeline baseline = [&](const Frame& f) {
        last_baseline = match_baseline(f.left, f.right, cfg);
        return last_baseline;
    };
    const FramePipeline refined = [&](const Frame& f) {
        return params ? match_refined(f.left, f.right, *params, cfg) : last_baseline;
    };
    std::vector<FrameReport> reports;
    std::size_t failures = 0;
    for (const auto& fp : paths) {
        try {
            const Frame f = load_frame(fp);
            auto r = per_frame_report(std::span<const Frame>(&f, 1), baseline, refined, a.tau);
            reports.push_back(r.front());
        } catch (const std::exception& e) {
            ++failures;
            err << "frame " << fp.id << " failed: " << e.what() << '\n';
        }
    }
    if (reports.empty()) {
        err << "all " << failures << " frames failed\n";
        return kExitFailure;
    }
    write_frames_csv(a.out, reports, params.has_value());
    const ReportSummary s = summarize(reports);
    out << "frames " << reports.size() << " (failed " << failures << ")\n";
    out << "mean error " << to_string(cfg.cost_kind) << "+SGM: " << format_number(s.mean_baseline) << '\n';
    if (params) {
        out << "mean error " << to_string(cfg.cost_kind) << "+GCP+SGM: " << format_number(s.mean_refined) << '\n';
        out << "mean improvement: " << format_number(s.mean_improvement) << '\n';
    }
    out << "wrote " << a.out << '\n';
    return kExitOk;
}

struct SweepArgs {
    CommonOptions common;
    std::string data;
    std::string out = "theta_sweep.csv";
    std::vector<double> thetas;
    double tau = kDefaultTau;
};

inline int cmd_sweep_theta(const SweepArgs& a, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(a.common);
    if (cfg.model_path.empty()) throw UsageError("sweep-theta needs --model");
    std::vector<double> thetas = a.thetas;
    if (thetas.empty()) {
        for (int i = 0; i <= 10; ++i) thetas.push_back(i / 10.0);
    }
    const auto paths = require_dataset(a.data);
    std::vector<Frame> frames;
    for (const auto& fp : paths) frames.push_back(load_frame(fp));
    const auto params = load_model(cfg.model_path);
    const auto sweep = sweep_theta(frames, thetas, params, cfg, a.tau);
    write_sweep_csv(a.out, sweep);
    for (const auto& p : sweep) out << "theta " << format_number(p.theta) << " mean_error " << format_number(p.mean_error) << '\n';
    const auto best = sweep[sweep_argmin(sweep)];
    out << "best theta " << format_number(best.theta) << " (mean error " << format_number(best.mean_error) << ")\n";
    out << "wrote " << a.out << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* app, CommonOptions& o, bool with_model = true) {
    app->add_option("--config", o.config, "key = value config file");
    if (with_model) app->add_option("--model", o.model, "trained network file");
    app->add_option("--cost", o.cost, "initial matching cost")->check(CLI::IsMember({"sad", "census"}));
    app->add_option("--dmax", o.dmax, "maximum disparity")->check(CLI::NonNegativeNumber);
    app->add_option("--theta", o.theta, "GCP confidence threshold")->check(CLI::Range(0.0, 1.0));
    app->add_option("--seed", o.seed, "random seed");
}

/// Parses and dispatches; returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Stereo matching with CNN-detected ground control points"};
    app.name("gcpstereo");
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train the confidence network");
    add_common(train_cmd, train_args.common, false);
    train_cmd->add_option("--data", train_args.data, "dataset directory")->required();
    train_cmd->add_option("--out", train_args.out, "output model file")->required();
    train_cmd->add_option("--log", train_args.log, "training log CSV (default <out>.log.csv)");

    MatchArgs match_args;
    auto* match_cmd = app.add_subcommand("match", "compute a disparity map");
    add_common(match_cmd, match_args.common);
    match_cmd->add_option("--left", match_args.left, "left image")->required();
    match_cmd->add_option("--right", match_args.right, "right image")->required();
    match_cmd->add_option("--out", match_args.out, "output disparity PNG")->required();
    match_cmd->add_option("--preview", match_args.preview, "color-mapped preview PNG");
    match_cmd->add_flag("--dump-gcp", match_args.dump_gcp, "write <out>_gcp.png");
    match_cmd->add_flag("--dump-confidence", match_args.dump_confidence, "write <out>_confidence.bin");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate against ground truth");
    add_common(eval_cmd, eval_args.common);
    eval_cmd->add_option("--data", eval_args.data, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_args.out, "per-frame CSV")->capture_default_str();
    eval_cmd->add_option("--tau", eval_args.tau, "bad-pixel threshold")->capture_default_str();

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep-theta", "mean error over a range of thresholds");
    add_common(sweep_cmd, sweep_args.common);
    sweep_cmd->add_option("--data", sweep_args.data, "dataset directory")->required();
    sweep_cmd->add_option("--out", sweep_args.out, "sweep CSV")->capture_default_str();
    sweep_cmd->add_option("--thetas", sweep_args.thetas, "comma-separated thresholds")->delimiter(',');
    sweep_cmd->add_option("--tau", sweep_args.tau, "bad-pixel threshold")->capture_default_str();

    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.push_back("gcpstereo");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, out);
        if (*match_cmd) return cmd_match(match_args, out);
        if (*eval_cmd) return cmd_eval(eval_args, out, err);
        if (*sweep_cmd) return cmd_sweep_theta(sweep_args, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace gcps::cli
