#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gcpstereo/error.hpp"
#include "gcpstereo/image.hpp"

namespace gcps {

enum class CostKind { SAD, Census, Refined };

inline const char* to_string(CostKind k) {
    switch (k) {
        case CostKind::SAD: return "sad";
        case CostKind::Census: return "census";
        case CostKind::Refined: return "refined";
    }
    return "?";
}

/// Square support window of side 2*radius+1.
struct WindowSpec {
    int radius = 4;

    int side() const { return 2 * radius + 1; }
    int area() const { return side() * side(); }
};

/// Upper end of the SAD cost range.
inline constexpr float kSadMaxCost = 3.2f;

/// W x H x (d_max+1) costs, laid out pixel-major then disparity.
struct CostVolume {
    int width = 0;
    int height = 0;
    int d_max = 0;
    CostKind kind = CostKind::SAD;
    std::vector<float> cost;

    CostVolume() = default;
    CostVolume(int w, int h, int dmax, CostKind k, float fill = 0.0f) : width(w), height(h), d_max(dmax), kind(k) {
        if (w <= 0 || h <= 0) throw DegenerateInput("cost volume dimensions must be positive");
        if (dmax < 0) throw DegenerateInput("d_max must be non-negative");
        cost.assign(static_cast<std::size_t>(w) * h * (dmax + 1), fill);
    }

    int disparities() const { return d_max + 1; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int d) const {
        return (static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(d_max + 1) + d;
    }
    float& at(int x, int y, int d) { return cost[index(x, y, d)]; }
    float at(int x, int y, int d) const { return cost[index(x, y, d)]; }

    std::span<float> pixel(std::size_t p) {
        return {cost.data() + p * static_cast<std::size_t>(d_max + 1), static_cast<std::size_t>(d_max + 1)};
    }
    std::span<const float> pixel(std::size_t p) const {
        return {cost.data() + p * static_cast<std::size_t>(d_max + 1), static_cast<std::size_t>(d_max + 1)};
    }
};

namespace detail {

inline void check_pair(const GrayImage& left, const GrayImage& right, int d_max, const WindowSpec& w) {
    if (left.empty() || right.empty()) throw DegenerateInput("empty image");
    require_same_size(left.width, left.height, right.width, right.height, "stereo pair");
    if (d_max < 0) throw DegenerateInput("d_max must be non-negative");
    if (w.radius < 0) throw DegenerateInput("window radius must be non-negative");
}

}  // namespace detail

/// Scaled SAD: (3.2 / window area) * sum of min(|L(q) - R(q-d)|, 1), with
/// clamp-to-edge reads around both window centers. Disparities that put the
/// match center off the image get the maximum cost 3.2.
inline CostVolume sad_cost(const GrayImage& left, const GrayImage& right, int d_max, const WindowSpec& w = {}) {
    detail::check_pair(left, right, d_max, w);
    const int W = left.width;
    const int H = left.height;
    const int r = w.radius;
    const double scale = static_cast<double>(kSadMaxCost) / w.area();
    CostVolume vol(W, H, d_max, CostKind::SAD);

    // Separable window sum: clipped differences on rows extended by r on both
    // sides, then a horizontal and a vertical pass.
    const int ext = W + 2 * r;
    std::vector<double> diff(static_cast<std::size_t>(ext));
    std::vector<double> rowsum(static_cast<std::size_t>(W) * H);
    for (int d = 0; d <= d_max; ++d) {
        for (int y = 0; y < H; ++y) {
            for (int i = 0; i < ext; ++i) {
                const int qx = i - r;
                const double a = left.clamped(qx, y);
                const double b = right.clamped(qx - d, y);
                diff[i] = std::min(std::abs(a - b), 1.0);
            }
            for (int x = 0; x < W; ++x) {
                double s = 0.0;
                for (int k = 0; k <= 2 * r; ++k) s += diff[x + k];
                rowsum[static_cast<std::size_t>(y) * W + x] = s;
            }
        }
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                if (x - d < 0) {
                    vol.at(x, y, d) = kSadMaxCost;
                    continue;
                }
                double s = 0.0;
                for (int k = -r; k <= r; ++k) {
                    s += rowsum[static_cast<std::size_t>(std::clamp(y + k, 0, H - 1)) * W + x];
                }
                vol.at(x, y, d) = static_cast<float>(std::min(s * scale, static_cast<double>(kSadMaxCost)));
            }
        }
    }
    return vol;
}

/// Census bit strings for one image; up to 128 comparison bits (radius <= 5).
struct CensusImage {
    using Descriptor = std::array<std::uint64_t, 2>;

    int width = 0;
    int height = 0;
    int bits = 0;
    std::vector<Descriptor> desc;

    const Descriptor& at(int x, int y) const { return desc[static_cast<std::size_t>(y) * width + x]; }

    static int hamming(const Descriptor& a, const Descriptor& b) {
        return std::popcount(a[0] ^ b[0]) + std::popcount(a[1] ^ b[1]);
    }
    /// Bit k counts window positions row by row, skipping the center.
    static bool bit(const Descriptor& d, int k) { return (d[k >> 6] >> (k & 63)) & 1u; }
};

inline constexpr int kMaxCensusRadius = 5;

/// Bit set iff I(p) > I(q), strictly; reads clamp to the image edge.
inline CensusImage census_transform(const GrayImage& img, const WindowSpec& w = {}) {
    if (img.empty()) throw DegenerateInput("empty image");
    if (w.radius < 0 || w.radius > kMaxCensusRadius) {
        throw DegenerateInput("census radius must be in [0, " + std::to_string(kMaxCensusRadius) + "]");
    }
    CensusImage out;
    out.width = img.width;
    out.height = img.height;
    out.bits = w.area() - 1;
    out.desc.assign(img.size(), CensusImage::Descriptor{0, 0});
    const int r = w.radius;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float center = img.at(x, y);
            CensusImage::Descriptor d{0, 0};
            int k = 0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (center > img.clamped(x + dx, y + dy)) d[k >> 6] |= std::uint64_t{1} << (k & 63);
                    ++k;
                }
            }
            out.desc[static_cast<std::size_t>(y) * img.width + x] = d;
        }
    }
    return out;
}

/// Hamming distance between the descriptors at p (left) and p-d (right).
/// Off-image matches get the maximum cost, the descriptor length.
inline CostVolume census_cost(const GrayImage& left, const GrayImage& right, int d_max, const WindowSpec& w = {}) {
    detail::check_pair(left, right, d_max, w);
    const CensusImage cl = census_transform(left, w);
    const CensusImage cr = census_transform(right, w);
    CostVolume vol(left.width, left.height, d_max, CostKind::Census);
    const auto max_cost = static_cast<float>(cl.bits);
    for (int y = 0; y < left.height; ++y) {
        for (int x = 0; x < left.width; ++x) {
            const auto& dl = cl.at(x, y);
            for (int d = 0; d <= d_max; ++d) {
                vol.at(x, y, d) = x - d < 0 ? max_cost : static_cast<float>(CensusImage::hamming(dl, cr.at(x - d, y)));
            }
        }
    }
    return vol;
}

/// Largest value a volume of this kind can hold before refinement.
inline float max_cost(CostKind kind, const WindowSpec& w = {}) {
    return kind == CostKind::Census ? static_cast<float>(w.area() - 1) : kSadMaxCost;
}

inline CostVolume compute_cost(CostKind kind, const GrayImage& left, const GrayImage& right, int d_max,
                               const WindowSpec& w = {}) {
    switch (kind) {
        case CostKind::SAD: return sad_cost(left, right, d_max, w);
        case CostKind::Census: return census_cost(left, right, d_max, w);
        case CostKind::Refined: break;
    }
    throw ConfigError("refined is not an initial cost kind");
}

// Volume dump: little-endian u32 width, height, d_max, then f32 costs in
// storage order.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("unexpected end of file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace detail

inline void write_volume(std::ostream& out, int width, int height, int d_max, std::span<const float> values) {
    detail::put_u32(out, static_cast<std::uint32_t>(width));
    detail::put_u32(out, static_cast<std::uint32_t>(height));
    detail::put_u32(out, static_cast<std::uint32_t>(d_max));
    for (float v : values) detail::put_f32(out, v);
}

inline void save_cost_volume(const CostVolume& vol, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_volume(out, vol.width, vol.height, vol.d_max, vol.cost);
    if (!out) throw IoError("writing '" + path + "' failed");
}

/// The dump does not record the kind; the caller supplies it.
inline CostVolume load_cost_volume(const std::string& path, CostKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    const auto w = detail::get_u32(in);
    const auto h = detail::get_u32(in);
    const auto dmax = detail::get_u32(in);
    if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16) || dmax > (1u << 16)) {
        throw FormatError("'" + path + "': implausible volume header");
    }
    CostVolume vol(static_cast<int>(w), static_cast<int>(h), static_cast<int>(dmax), kind);
    for (auto& c : vol.cost) c = detail::get_f32(in);
    return vol;
}

}  // namespace gcps
