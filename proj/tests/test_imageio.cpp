#include <gtest/gtest.h>

#include <png.h>

#include <cmath>
#include <random>

#include "gcpstereo/image.hpp"
#include "gcpstereo/imageio.hpp"
#include "temp_dir.hpp"

using namespace gcps;
using testutil::TempDir;

namespace {

std::string pgm(int w, int h, int maxval, const std::string& payload) {
    return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n" + payload;
}

void write_gray16(const std::string& path, int w, int h, const std::vector<std::uint16_t>& values) {
    std::vector<unsigned char> bytes;
    for (auto v : values) {
        bytes.push_back(static_cast<unsigned char>(v >> 8));
        bytes.push_back(static_cast<unsigned char>(v & 0xff));
    }
    detail::write_png(path, w, h, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

}  // namespace

TEST(LoadGray, PgmBytesScaleLinearly) {
    TempDir dir;
    const std::string path = dir.file("a.pgm");
    testutil::write_bytes(path, pgm(2, 2, 255, std::string("\x00\xff\x00\xff", 4)));
    const GrayImage img = load_gray(path);
    ASSERT_EQ(img.width, 2);
    ASSERT_EQ(img.height, 2);
    EXPECT_EQ(img.data, (std::vector<float>{0.0f, 1.0f, 0.0f, 1.0f}));
}

TEST(LoadGray, SingleMidGrayPixel) {
    TempDir dir;
    const std::string path = dir.file("b.pgm");
    testutil::write_bytes(path, pgm(1, 1, 255, std::string("\x80", 1)));
    const GrayImage img = load_gray(path);
    EXPECT_FLOAT_EQ(img.data[0], 128.0f / 255.0f);
}

TEST(LoadGray, PgmCommentsAndSixteenBit) {
    TempDir dir;
    const std::string path = dir.file("c.pgm");
    testutil::write_bytes(path, "P5\n# comment\n2 1\n65535\n" + std::string("\xff\xff\x00\x00", 4));
    const GrayImage img = load_gray(path);
    EXPECT_FLOAT_EQ(img.data[0], 1.0f);
    EXPECT_FLOAT_EQ(img.data[1], 0.0f);
}

TEST(LoadGray, CorruptHeaderIsFormatError) {
    TempDir dir;
    const std::string path = dir.file("bad.pgm");
    testutil::write_bytes(path, "P5\nxx yy\n255\n\x01");
    EXPECT_THROW(load_gray(path), FormatError);
    testutil::write_bytes(path, "garbage");
    EXPECT_THROW(load_gray(path), FormatError);
    testutil::write_bytes(path, pgm(4, 4, 255, "short"));
    EXPECT_THROW(load_gray(path), FormatError);
    testutil::write_bytes(path, pgm(0, 3, 255, ""));
    EXPECT_THROW(load_gray(path), FormatError);
}

TEST(LoadGray, MissingFileIsIoError) { EXPECT_THROW(load_gray("/nonexistent/x.png"), IoError); }

TEST(LoadGray, PngRoundTrip) {
    TempDir dir;
    GrayImage img(3, 2);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>(i * 40) / 255.0f;
    save_gray_png(img, dir.file("g.png"));
    const GrayImage back = load_gray(dir.file("g.png"));
    ASSERT_EQ(back.size(), img.size());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_FLOAT_EQ(back.data[i], img.data[i]);
}

TEST(LoadGray, RgbUsesLumaWeights) {
    TempDir dir;
    const std::string path = dir.file("rgb.png");
    detail::write_png(path, 3, 1, PNG_COLOR_TYPE_RGB, 8, {255, 0, 0, 0, 255, 0, 0, 0, 255});
    const GrayImage img = load_gray(path);
    EXPECT_NEAR(img.data[0], 0.299, 1e-6);
    EXPECT_NEAR(img.data[1], 0.587, 1e-6);
    EXPECT_NEAR(img.data[2], 0.114, 1e-6);
}

TEST(Normalize, TwoPointSymmetry) {
    GrayImage img(2, 1);
    img.data = {0.0f, 1.0f};
    const GrayImage n = normalize(img);
    EXPECT_FLOAT_EQ(n.data[0], -1.0f);
    EXPECT_FLOAT_EQ(n.data[1], 1.0f);
}

TEST(Normalize, ConstantImageIsDegenerate) {
    GrayImage img(2, 2, 1.0f);
    EXPECT_THROW(normalize(img), DegenerateInput);
    EXPECT_THROW(normalize(GrayImage(1, 1)), DegenerateInput);
}

TEST(Normalize, ZeroMeanUnitVarianceAndIdempotent) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    GrayImage img(17, 9);
    for (auto& v : img.data) v = dist(rng);
    const GrayImage n = normalize(img);
    double mean = 0.0, sq = 0.0;
    for (float v : n.data) mean += v;
    mean /= static_cast<double>(n.size());
    for (float v : n.data) sq += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n.size())), 1.0, 1e-5);
    const GrayImage nn = normalize(n);
    for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(nn.data[i], n.data[i], 1e-5);
}

TEST(KittiGroundTruth, DecodesSixteenBitValues) {
    TempDir dir;
    const std::string path = dir.file("gt.png");
    write_gray16(path, 3, 1, {0, 256, 12800});
    const GroundTruth gt = load_kitti_gt(path);
    EXPECT_FALSE(gt.disp[0].has_value());
    ASSERT_TRUE(gt.disp[1].has_value());
    EXPECT_FLOAT_EQ(*gt.disp[1], 1.0f);
    ASSERT_TRUE(gt.disp[2].has_value());
    EXPECT_FLOAT_EQ(*gt.disp[2], 50.0f);
    EXPECT_EQ(gt.known_count(), 2u);
}

TEST(KittiGroundTruth, RejectsEightBitAndWrongSize) {
    TempDir dir;
    detail::write_png(dir.file("g8.png"), 2, 1, PNG_COLOR_TYPE_GRAY, 8, {1, 2});
    EXPECT_THROW(load_kitti_gt(dir.file("g8.png")), FormatError);
    write_gray16(dir.file("g16.png"), 2, 1, {256, 512});
    EXPECT_THROW(load_kitti_gt(dir.file("g16.png"), std::make_pair(3, 1)), DimensionMismatch);
}

TEST(SaveDisparity, EncodingAndRoundTrip) {
    TempDir dir;
    DisparityMap d(4, 1, 60);
    d.disp = {0, 1, 7, 60};
    const std::string path = dir.file("d.png");
    save_disparity_png(d, path);

    const RawRaster raw = read_raster(path);
    EXPECT_EQ(raw.bit_depth, 16);
    EXPECT_EQ(raw.samples, (std::vector<std::uint16_t>{0, 256, 7 * 256, 60 * 256}));

    const GroundTruth back = load_kitti_gt(path);
    EXPECT_FALSE(back.disp[0].has_value());
    for (std::size_t i = 1; i < d.disp.size(); ++i) {
        ASSERT_TRUE(back.disp[i].has_value());
        EXPECT_EQ(static_cast<int>(*back.disp[i]), d.disp[i]);
    }
}

TEST(SaveDisparity, RejectsUnencodableRange) {
    TempDir dir;
    DisparityMap d(1, 1, 300);
    EXPECT_THROW(save_disparity_png(d, dir.file("x.png")), DegenerateInput);
}

TEST(SaveMask, SizeMismatchThrows) {
    TempDir dir;
    EXPECT_THROW(save_mask_png(2, 2, std::vector<bool>(3), dir.file("m.png")), DimensionMismatch);
}
