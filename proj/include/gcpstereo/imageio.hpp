#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcpstereo/error.hpp"
#include "gcpstereo/image.hpp"

namespace gcps {

/// Decoded raster before any intensity interpretation. Samples are stored
/// interleaved, one 16-bit slot per channel regardless of the file's depth.
struct RawRaster {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> samples;

    std::uint16_t sample(int x, int y, int c) const {
        return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double max_value() const { return static_cast<double>((1u << bit_depth) - 1u); }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw IoError("cannot open '" + path + "' (" + std::strerror(errno) + ")");
    }
    return f;
}

struct PngErrorContext {
    char message[256] = {0};
};

inline void png_error_handler(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<PngErrorContext*>(png_get_error_ptr(png));
    if (ctx != nullptr) std::snprintf(ctx->message, sizeof(ctx->message), "%s", msg);
    png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

// setjmp lives in these helpers so that no C++ object with a destructor is a
// local of the frame longjmp returns to.
inline bool png_read_guarded(png_structp png, png_infop info, std::FILE* fp, RawRaster& out,
                             std::vector<unsigned char>& buffer, std::vector<png_bytep>& rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);

    buffer.assign(rowbytes * static_cast<std::size_t>(out.height), 0);
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    return true;
}

inline RawRaster read_png(const std::string& path) {
    FilePtr fp = open_file(path, "rb");
    std::array<unsigned char, 8> sig{};
    if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() || png_sig_cmp(sig.data(), 0, 8) != 0) {
        throw FormatError("'" + path + "' is not a PNG file");
    }
    PngErrorContext ctx;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_handler, png_warning_handler);
    if (png == nullptr) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("png_create_info_struct failed");
    }
    RawRaster out;
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    const bool ok = png_read_guarded(png, info, fp.get(), out, buffer, rows);
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) {
        throw FormatError("'" + path + "': " + ctx.message);
    }
    if (out.width <= 0 || out.height <= 0) {
        throw FormatError("'" + path + "' has zero dimension");
    }
    const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(count);
    if (out.bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) out.samples[i] = buffer[i];
    }
    return out;
}

inline bool png_write_guarded(png_structp png, png_infop info, std::FILE* fp, int width, int height,
                              int color_type, int depth, std::vector<png_bytep>& rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    return true;
}

/// `bytes` holds big-endian rows already laid out for the given type/depth.
inline void write_png(const std::string& path, int width, int height, int color_type, int depth,
                      std::vector<unsigned char> bytes) {
    FilePtr fp = open_file(path, "wb");
    PngErrorContext ctx;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_handler, png_warning_handler);
    if (png == nullptr) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png_create_info_struct failed");
    }
    const std::size_t rowbytes = bytes.size() / static_cast<std::size_t>(height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[y] = bytes.data() + rowbytes * y;
    const bool ok = png_write_guarded(png, info, fp.get(), width, height, color_type, depth, rows);
    png_destroy_write_struct(&png, &info);
    if (!ok) throw IoError("writing '" + path + "': " + ctx.message);
    if (std::fflush(fp.get()) != 0) throw IoError("writing '" + path + "' failed");
}

inline void skip_pnm_space(const std::string& s, std::size_t& pos) {
    while (pos < s.size()) {
        if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
}

inline std::optional<long> read_pnm_int(const std::string& s, std::size_t& pos) {
    skip_pnm_space(s, pos);
    long v = 0;
    std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + (s[pos] - '0');
        if (v > 1'000'000'000L) return std::nullopt;
        ++pos;
    }
    if (pos == start) return std::nullopt;
    return v;
}

/// Binary P5 only.
inline RawRaster parse_pgm(const std::string& bytes, const std::string& path) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw FormatError("'" + path + "' is not a binary PGM (P5) file");
    }
    std::size_t pos = 2;
    const auto w = read_pnm_int(bytes, pos);
    const auto h = read_pnm_int(bytes, pos);
    const auto maxval = read_pnm_int(bytes, pos);
    if (!w || !h || !maxval || pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw FormatError("'" + path + "': corrupt PGM header");
    }
    if (*w == 0 || *h == 0) throw FormatError("'" + path + "' has zero dimension");
    if (*maxval <= 0 || *maxval > 65535) throw FormatError("'" + path + "': PGM maxval out of range");
    ++pos;

    RawRaster out;
    out.width = static_cast<int>(*w);
    out.height = static_cast<int>(*h);
    out.channels = 1;
    const bool wide = *maxval > 255;
    const std::size_t count = static_cast<std::size_t>(out.width) * out.height;
    if (bytes.size() - pos < count * (wide ? 2 : 1)) {
        throw FormatError("'" + path + "': truncated PGM data");
    }
    out.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (wide) {
            out.samples[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[pos + 2 * i]) << 8) |
                                                        static_cast<unsigned char>(bytes[pos + 2 * i + 1]));
        } else {
            out.samples[i] = static_cast<unsigned char>(bytes[pos + i]);
        }
    }
    // bit_depth is only used to derive the scale; PGM carries an explicit maxval.
    out.bit_depth = 0;
    while (((1L << out.bit_depth) - 1) < *maxval) ++out.bit_depth;
    if (((1L << out.bit_depth) - 1) != *maxval) {
        // Non power-of-two maxval: keep exact scaling by rescaling samples to 16 bit.
        for (auto& s : out.samples) {
            s = static_cast<std::uint16_t>(std::lround(static_cast<double>(s) * 65535.0 / *maxval));
        }
        out.bit_depth = 16;
    }
    return out;
}

inline std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace detail

/// Decode a PNG or binary PGM without interpreting intensities.
inline RawRaster read_raster(const std::string& path) {
    const std::string bytes = detail::read_all(path);
    if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0) {
        return detail::read_png(path);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P') {
        return detail::parse_pgm(bytes, path);
    }
    throw FormatError("'" + path + "': unsupported image format (expected PNG or binary PGM)");
}

/// Load an 8/16-bit gray or RGB image with intensities scaled to [0,1].
/// RGB is converted with BT.601 luma weights; alpha is dropped.
inline GrayImage load_gray(const std::string& path) {
    const RawRaster raw = read_raster(path);
    GrayImage img(raw.width, raw.height);
    const double scale = 1.0 / raw.max_value();
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
            double v = 0.0;
            if (raw.channels >= 3) {
                v = 0.299 * raw.sample(x, y, 0) + 0.587 * raw.sample(x, y, 1) + 0.114 * raw.sample(x, y, 2);
            } else {
                v = raw.sample(x, y, 0);
            }
            img.at(x, y) = static_cast<float>(v * scale);
        }
    }
    return img;
}

/// KITTI disparity PNG: 16-bit single channel, disparity = value / 256, 0 = unknown.
inline GroundTruth load_kitti_gt(const std::string& path,
                                 std::optional<std::pair<int, int>> expected_size = std::nullopt) {
    const std::string bytes = detail::read_all(path);
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw FormatError("'" + path + "': ground truth must be a PNG file");
    }
    const RawRaster raw = detail::read_png(path);
    if (raw.bit_depth != 16 || raw.channels != 1) {
        throw FormatError("'" + path + "': ground truth must be a 16-bit single-channel PNG");
    }
    if (expected_size) {
        detail::require_same_size(raw.width, raw.height, expected_size->first, expected_size->second,
                                  "ground truth size");
    }
    GroundTruth gt(raw.width, raw.height);
    for (std::size_t i = 0; i < raw.samples.size(); ++i) {
        if (raw.samples[i] != 0) gt.disp[i] = static_cast<float>(raw.samples[i]) / 256.0f;
    }
    return gt;
}

/// 16-bit PNG with value = disparity * 256. Disparity 0 is stored as 0, which
/// readers treat as invalid.
inline void save_disparity_png(const DisparityMap& d, const std::string& path) {
    if (!d.valid()) throw DegenerateInput("disparity map has values outside [0, d_max]");
    if (d.d_max * 256 > 65535) throw DegenerateInput("d_max too large for 16-bit disparity encoding");
    std::vector<unsigned char> bytes(d.disp.size() * 2);
    for (std::size_t i = 0; i < d.disp.size(); ++i) {
        const auto v = static_cast<std::uint16_t>(d.disp[i] * 256);
        bytes[2 * i] = static_cast<unsigned char>(v >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    detail::write_png(path, d.width, d.height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

/// Write a ground-truth map in the same KITTI encoding (rounded to 1/256 px).
inline void save_kitti_gt(const GroundTruth& gt, const std::string& path) {
    std::vector<unsigned char> bytes(gt.disp.size() * 2, 0);
    for (std::size_t i = 0; i < gt.disp.size(); ++i) {
        if (!gt.disp[i]) continue;
        const long v = std::lround(static_cast<double>(*gt.disp[i]) * 256.0);
        if (v <= 0 || v > 65535) throw DegenerateInput("ground truth disparity not encodable");
        bytes[2 * i] = static_cast<unsigned char>(v >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    detail::write_png(path, gt.width, gt.height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

/// 8-bit gray PNG; values are clamped to [0,1] and scaled by 255.
inline void save_gray_png(const GrayImage& img, const std::string& path) {
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    }
    detail::write_png(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 8, bytes);
}

/// Binary P5, 8-bit.
inline void save_gray_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (float v : img.data) {
        out.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    if (!out) throw IoError("writing '" + path + "' failed");
}

/// Jet-colored 8-bit RGB rendering of a disparity map, for inspection only.
inline void save_disparity_preview(const DisparityMap& d, const std::string& path) {
    std::vector<unsigned char> bytes(d.disp.size() * 3);
    const double denom = d.d_max > 0 ? d.d_max : 1;
    for (std::size_t i = 0; i < d.disp.size(); ++i) {
        const double t = std::clamp(d.disp[i] / denom, 0.0, 1.0);
        const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
        const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
        const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
        bytes[3 * i] = static_cast<unsigned char>(std::lround(r * 255));
        bytes[3 * i + 1] = static_cast<unsigned char>(std::lround(g * 255));
        bytes[3 * i + 2] = static_cast<unsigned char>(std::lround(b * 255));
    }
    detail::write_png(path, d.width, d.height, PNG_COLOR_TYPE_RGB, 8, bytes);
}

/// 8-bit PNG, 255 where `mask` is set.
inline void save_mask_png(int width, int height, const std::vector<bool>& mask, const std::string& path) {
    if (mask.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionMismatch("mask size does not match " + detail::dims(width, height));
    }
    std::vector<unsigned char> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
    detail::write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 8, bytes);
}

}  // namespace gcps
