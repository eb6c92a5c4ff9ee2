#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>

#include "gcpstereo/error.hpp"
#include "gcpstereo/pipeline.hpp"

namespace gcps {

// Flat "key = value" text, one entry per line, '#' starts a comment. Keys
// left out take the defaults of the chosen cost_kind.

inline std::optional<CostKind> parse_cost_kind(std::string_view s) {
    if (s == "sad" || s == "SAD") return CostKind::SAD;
    if (s == "census" || s == "Census") return CostKind::Census;
    return std::nullopt;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return v;
}

template <class T>
std::string to_text(T v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

using ConfigEntries = std::map<std::string, std::string>;

inline ConfigEntries read_config_entries(std::istream& in) {
    ConfigEntries entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!entries.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
    }
    return entries;
}

/// Overlay `entries` on the defaults of the selected cost kind. An explicit
/// `kind` wins over the cost_kind entry.
inline PipelineConfig build_config(const ConfigEntries& entries, std::optional<CostKind> kind = std::nullopt) {
    if (!kind) {
        if (const auto it = entries.find("cost_kind"); it != entries.end()) {
            kind = parse_cost_kind(it->second);
            if (!kind) throw ConfigError("cost_kind must be 'sad' or 'census', got '" + it->second + "'");
        }
    }
    PipelineConfig cfg = PipelineConfig::defaults(kind.value_or(CostKind::Census));
    using detail::parse_value;
    for (const auto& [key, value] : entries) {
        if (key == "cost_kind") {
            if (!parse_cost_kind(value)) throw ConfigError("cost_kind must be 'sad' or 'census', got '" + value + "'");
        } else if (key == "window_radius") {
            cfg.window.radius = parse_value<int>(key, value);
        } else if (key == "d_max") {
            cfg.d_max = parse_value<int>(key, value);
        } else if (key == "p1") {
            cfg.sgm.p1 = parse_value<double>(key, value);
        } else if (key == "p2") {
            cfg.sgm.p2 = parse_value<double>(key, value);
        } else if (key == "theta") {
            cfg.refine.theta = parse_value<float>(key, value);
        } else if (key == "c_hi") {
            cfg.refine.c_hi = parse_value<float>(key, value);
        } else if (key == "c_low") {
            cfg.refine.c_low = parse_value<float>(key, value);
        } else if (key == "epsilon") {
            cfg.train.epsilon = parse_value<double>(key, value);
        } else if (key == "lr") {
            cfg.train.lr = parse_value<double>(key, value);
        } else if (key == "epochs") {
            cfg.train.epochs = parse_value<int>(key, value);
        } else if (key == "batch_size") {
            cfg.train.batch_size = parse_value<int>(key, value);
        } else if (key == "n_low") {
            cfg.train.n_low = parse_value<int>(key, value);
        } else if (key == "n_high") {
            cfg.train.n_high = parse_value<int>(key, value);
        } else if (key == "p_high") {
            cfg.train.p_high = parse_value<int>(key, value);
        } else if (key == "seed") {
            cfg.train.seed = parse_value<std::uint64_t>(key, value);
        } else if (key == "model") {
            cfg.model_path = value;
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

inline PipelineConfig parse_config(const std::string& text, std::optional<CostKind> kind = std::nullopt) {
    std::istringstream in(text);
    return build_config(read_config_entries(in), kind);
}

inline PipelineConfig load_config(const std::string& path, std::optional<CostKind> kind = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return build_config(read_config_entries(in), kind);
}

inline std::string serialize_config(const PipelineConfig& cfg) {
    using detail::to_text;
    std::ostringstream out;
    out << "cost_kind = " << to_string(cfg.cost_kind) << '\n'
        << "window_radius = " << cfg.window.radius << '\n'
        << "d_max = " << cfg.d_max << '\n'
        << "p1 = " << to_text(cfg.sgm.p1) << '\n'
        << "p2 = " << to_text(cfg.sgm.p2) << '\n'
        << "theta = " << to_text(cfg.refine.theta) << '\n'
        << "c_hi = " << to_text(cfg.refine.c_hi) << '\n'
        << "c_low = " << to_text(cfg.refine.c_low) << '\n'
        << "epsilon = " << to_text(cfg.train.epsilon) << '\n'
        << "lr = " << to_text(cfg.train.lr) << '\n'
        << "epochs = " << cfg.train.epochs << '\n'
        << "batch_size = " << cfg.train.batch_size << '\n'
        << "n_low = " << cfg.train.n_low << '\n'
        << "n_high = " << cfg.train.n_high << '\n'
        << "p_high = " << cfg.train.p_high << '\n'
        << "seed = " << cfg.train.seed << '\n';
    if (!cfg.model_path.empty()) out << "model = " << cfg.model_path << '\n';
    return out.str();
}

}  // namespace gcps
