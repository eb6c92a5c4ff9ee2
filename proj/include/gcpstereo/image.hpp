#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gcpstereo/error.hpp"

namespace gcps {

/// Single-channel raster, row-major. Values are either raw intensities in
/// [0,1] (as loaded) or zero-mean/unit-variance after normalize().
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f) : width(w), height(h) {
        if (w <= 0 || h <= 0) {
            throw DegenerateInput("image dimensions must be positive, got " + detail::dims(w, h));
        }
        data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    /// Clamp-to-edge read.
    float clamped(int x, int y) const {
        return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
    }
};

/// Subtract the mean and divide by the population standard deviation.
inline GrayImage normalize(const GrayImage& img) {
    if (img.size() < 2) {
        throw DegenerateInput("normalize needs at least 2 pixels");
    }
    double sum = 0.0;
    for (float v : img.data) {
        if (!std::isfinite(v)) throw DegenerateInput("normalize: non-finite pixel value");
        sum += v;
    }
    const double n = static_cast<double>(img.size());
    const double mean = sum / n;
    double sq = 0.0;
    for (float v : img.data) {
        const double c = v - mean;
        sq += c * c;
    }
    const double stddev = std::sqrt(sq / n);
    if (!(stddev > 0.0)) {
        throw DegenerateInput("normalize: image has zero variance");
    }
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        out.data[i] = static_cast<float>((img.data[i] - mean) / stddev);
    }
    return out;
}

/// Per-pixel reference disparities; std::nullopt marks unknown pixels.
struct GroundTruth {
    int width = 0;
    int height = 0;
    std::vector<std::optional<float>> disp;

    GroundTruth() = default;
    GroundTruth(int w, int h) : width(w), height(h) {
        if (w <= 0 || h <= 0) {
            throw DegenerateInput("ground truth dimensions must be positive, got " + detail::dims(w, h));
        }
        disp.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), std::nullopt);
    }

    std::optional<float>& at(int x, int y) { return disp[static_cast<std::size_t>(y) * width + x]; }
    const std::optional<float>& at(int x, int y) const {
        return disp[static_cast<std::size_t>(y) * width + x];
    }

    std::size_t known_count() const {
        return static_cast<std::size_t>(
            std::count_if(disp.begin(), disp.end(), [](const auto& d) { return d.has_value(); }));
    }
};

/// Integer disparity per pixel in [0, d_max].
struct DisparityMap {
    int width = 0;
    int height = 0;
    int d_max = 0;
    std::vector<std::int32_t> disp;

    DisparityMap() = default;
    DisparityMap(int w, int h, int dmax) : width(w), height(h), d_max(dmax) {
        if (w <= 0 || h <= 0) {
            throw DegenerateInput("disparity map dimensions must be positive, got " + detail::dims(w, h));
        }
        if (dmax < 0) throw DegenerateInput("d_max must be non-negative");
        disp.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
    }

    std::int32_t& at(int x, int y) { return disp[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t at(int x, int y) const { return disp[static_cast<std::size_t>(y) * width + x]; }

    bool valid() const {
        return std::all_of(disp.begin(), disp.end(), [this](std::int32_t d) { return d >= 0 && d <= d_max; });
    }
};

}  // namespace gcps
