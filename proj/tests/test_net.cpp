#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "gcpstereo/net.hpp"
#include "gcpstereo/synthetic.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace gcps;

namespace {

Patch random_patch(std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Patch p;
    for (auto& v : p) v = dist(rng);
    return p;
}

GroundTruth constant_gt(int w, int h, float d) {
    GroundTruth gt(w, h);
    for (auto& v : gt.disp) v = d;
    return gt;
}

}  // namespace

TEST(Network, PatchDescriptorHasSixtyFourValues) {
    const auto params = init_params(1);
    std::mt19937_64 rng(1);
    const auto f = forward_patch(params, random_patch(rng));
    EXPECT_EQ(f.size(), 64);
    const std::vector<float> short_patch(80, 0.0f);
    EXPECT_THROW(forward_patch(params, std::span<const float>(short_patch)), DimensionMismatch);
    EXPECT_EQ(params.parameter_count(), 64u * 9 + 64 + 3 * (64u * 576 + 64));
}

TEST(Network, InitIsDeterministicAndBounded) {
    const auto a = init_params(42);
    const auto b = init_params(42);
    const auto c = init_params(43);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == c);
    EXPECT_EQ(a.layers[0].weights.size(), 576);
    for (const auto& l : a.layers) {
        const float bound = static_cast<float>(std::sqrt(1.0 / l.fan_in()));
        EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), bound);
        EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0f);
    }
}

TEST(Network, ZeroParametersGiveZeroDescriptor) {
    const auto params = NetworkParams<float>::zeros();
    std::mt19937_64 rng(2);
    const Patch p = random_patch(rng);
    EXPECT_EQ(forward_patch(params, p).cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_EQ(confidence(params, p, random_patch(rng)), 0.0f);
}

TEST(Network, NegativePreActivationsAreRectified) {
    auto params = init_params(3);
    params.layers[3].bias.setConstant(-1e6f);
    std::mt19937_64 rng(3);
    EXPECT_EQ(forward_patch(params, random_patch(rng)).cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Network, MatchesDirectConvolution) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        auto params = init_params(100 + trial);
        std::uniform_real_distribution<float> bias(-0.1f, 0.1f);
        for (auto& l : params.layers) {
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = bias(rng);
        }
        const Patch p = random_patch(rng);
        const auto f = forward_patch(params, p);
        const auto ref = oracle::forward(params, p);
        for (int o = 0; o < 64; ++o) EXPECT_NEAR(f(o), ref.f[o], 1e-5);
    }
}

TEST(Network, ConfidenceIsSymmetricAndSelfNonNegative) {
    const auto params = init_params(5);
    std::mt19937_64 rng(5);
    const Patch a = random_patch(rng);
    const Patch b = random_patch(rng);
    EXPECT_EQ(confidence(params, a, b), confidence(params, b, a));
    const auto f = forward_patch(params, a);
    EXPECT_FLOAT_EQ(confidence(params, a, a), f.squaredNorm());
    EXPECT_GE(confidence(params, a, a), 0.0f);
}

TEST(Hinge, MarginAnchors) {
    EXPECT_DOUBLE_EQ(hinge_loss(0.3, 0.3, 0.2), 0.2);
    EXPECT_DOUBLE_EQ(hinge_loss(0.5, 0.25, 0.25), 0.0);
    EXPECT_DOUBLE_EQ(hinge_loss(0.9, 0.1, 0.2), 0.0);
    EXPECT_NEAR(hinge_loss(0.1, 0.5, 0.2), 0.6, 1e-12);
}

TEST(Sampling, OffsetsStayInConfiguredIntervals) {
    const int W = 60, H = 12;
    std::mt19937_64 rng(6);
    const GrayImage img = oracle::random_image(W, H, rng);
    const GroundTruth gt = constant_gt(W, H, 12.0f);
    TrainConfig cfg;
    std::map<int, long> neg, pos;
    long draws = 0;
    while (draws < 100000) {
        for (const auto& s : sample_examples(img, img, gt, cfg, rng)) {
            ++neg[s.o_neg];
            ++pos[s.o_pos];
            ++draws;
            ASSERT_GE(s.neg_x(), 4);
            ASSERT_LE(s.neg_x(), W - 5);
        }
    }
    for (const auto& [o, n] : neg) {
        EXPECT_GE(std::abs(o), 4) << o;
        EXPECT_LE(std::abs(o), 8) << o;
    }
    EXPECT_EQ(neg.size(), 10u);
    EXPECT_EQ(pos.size(), 3u);
    for (const auto& [o, n] : pos) EXPECT_LE(std::abs(o), 1);
}

TEST(Sampling, UsablePixelCountMatchesEnumeration) {
    std::mt19937_64 rng(7);
    const int W = 30, H = 14;
    const GrayImage img = oracle::random_image(W, H, rng);
    GroundTruth gt(W, H);
    std::uniform_int_distribution<int> d(0, 14);
    std::bernoulli_distribution known(0.8);
    for (auto& v : gt.disp) {
        if (known(rng)) v = static_cast<float>(d(rng));
    }
    TrainConfig cfg;
    auto fits = [&](int cx) { return cx - 4 >= 0 && cx + 4 <= W - 1; };
    std::size_t expected = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!gt.at(x, y) || !fits(x) || y < 4 || y > H - 5) continue;
            const int c = x - static_cast<int>(*gt.at(x, y));
            bool ok = fits(c - 1) && fits(c) && fits(c + 1);
            bool any_neg = false;
            for (int o = 4; o <= 8; ++o) any_neg = any_neg || fits(c + o) || fits(c - o);
            if (ok && any_neg) ++expected;
        }
    }
    const auto sites = sample_examples(img, img, gt, cfg, rng);
    EXPECT_EQ(sites.size(), expected);
    EXPECT_THROW(sample_examples(img, img, GroundTruth(W, H), cfg, rng), DegenerateInput);
}

TEST(Gradient, ImageLevelEqualsPatchLevelSum) {
    RandomDotSpec spec;
    spec.width = 24;
    spec.height = 20;
    std::mt19937_64 rng(8);
    const auto frame = make_random_dot_stereogram(spec, rng);
    const GrayImage l = normalize(frame.left);
    const GrayImage r = normalize(frame.right);
    TrainConfig cfg;
    const auto sites = sample_examples(l, r, frame.gt, cfg, rng);
    ASSERT_FALSE(sites.empty());
    auto params = init_params<double>(8);
    for (auto& layer : params.layers) layer.bias.setConstant(0.01);

    std::vector<ExamplePair> patches;
    for (const auto& s : sites) patches.push_back(make_example_pair(l, r, s));
    auto g_patch = NetworkParams<double>::zeros();
    const double loss_patch = loss_and_gradient<double>(params, patches, 0.2, &g_patch);
    for (int strip : {1, 5, 32}) {
        auto g_img = NetworkParams<double>::zeros();
        const double loss_img = image_loss_and_gradient<double>(params, l, r, sites, 0.2, strip, &g_img);
        EXPECT_NEAR(loss_img, loss_patch, 1e-9 * std::max(1.0, loss_patch));
        for (int k = 0; k < kLayerCount; ++k) {
            const double scale = std::max(1.0, g_patch.layers[k].weights.cwiseAbs().maxCoeff());
            EXPECT_LE((g_img.layers[k].weights - g_patch.layers[k].weights).cwiseAbs().maxCoeff(), 1e-9 * scale);
            EXPECT_LE((g_img.layers[k].bias - g_patch.layers[k].bias).cwiseAbs().maxCoeff(), 1e-9 * scale);
        }
    }
}

// Steps of 1e-3 straddle ReLU kinks for most first-layer weights, so the
// backprop check uses a step small enough to stay on one linear piece for
// nearly every parameter; at most 1 in 10^4 may still straddle a kink.
TEST(Gradient, MatchesSmallStepFiniteDifferences) {
    std::mt19937_64 rng(9);
    const auto params = init_params<double>(9);
    const auto batch = oracle::random_batch(5, rng);
    auto grad = NetworkParams<double>::zeros();
    loss_and_gradient<double>(params, batch, 0.2, &grad);
    const auto check = oracle::finite_difference_check(params, batch, 0.2, grad, 1e-6, 1e-3, 1e-10);
    EXPECT_EQ(check.checked, params.parameter_count());
    EXPECT_LE(check.failed, check.checked / 10000) << "worst relative error " << check.worst_relative;
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
    RandomDotSpec spec;
    const auto set = make_random_dot_set(spec, 4, 10);
    std::vector<TrainingFrame> frames;
    for (const auto& f : set) frames.push_back({f.left, f.right, f.gt});
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 2;
    cfg.seed = 10;
    const auto result = train(frames, cfg);
    EXPECT_TRUE(result.params == init_params<float>(10));
    ASSERT_EQ(result.loss_trace.size(), 3u);
}

TEST(Training, SameSeedSameParameters) {
    const auto set = make_random_dot_set(RandomDotSpec{}, 6, 11);
    std::vector<TrainingFrame> frames;
    for (const auto& f : set) frames.push_back({f.left, f.right, f.gt});
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    EXPECT_TRUE(train(frames, cfg).params == train(frames, cfg).params);
}

TEST(Training, LossDecreasesOnRandomDots) {
    const auto set = make_random_dot_set(RandomDotSpec{}, 60, 12);
    std::vector<TrainingFrame> frames;
    for (const auto& f : set) frames.push_back({f.left, f.right, f.gt});
    TrainConfig cfg;
    cfg.epochs = 12;
    const auto result = train(frames, cfg);
    EXPECT_LT(result.loss_trace.back(), result.loss_trace.front());
}

TEST(Training, RejectsEmptyDataset) {
    EXPECT_THROW(train(std::span<const TrainingFrame>{}, TrainConfig{}), DegenerateInput);
    TrainConfig bad;
    bad.n_low = 9;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ConfidenceVolume, MatchesPerPatchEvaluation) {
    std::mt19937_64 rng(13);
    const GrayImage l = normalize(oracle::random_image(12, 10, rng));
    const GrayImage r = normalize(oracle::random_image(12, 10, rng));
    const auto params = init_params(13);
    const int d_max = 3;
    const auto vol = confidence_volume(params, l, r, d_max);

    std::vector<double> raw;
    std::vector<bool> valid;
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 12; ++x) {
            for (int d = 0; d <= d_max; ++d) {
                const bool in = x - d >= 0;
                valid.push_back(in);
                raw.push_back(in ? static_cast<double>(confidence(params, extract_patch(l, x, y),
                                                                  extract_patch(r, x - d, y)))
                                 : 0.0);
            }
        }
    }
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!valid[i]) continue;
        lo = std::min(lo, raw[i]);
        hi = std::max(hi, raw[i]);
    }
    ASSERT_GT(hi, lo);
    ASSERT_EQ(vol.conf.size(), raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double expected = valid[i] ? (raw[i] - lo) / (hi - lo) : 0.0;
        EXPECT_NEAR(vol.conf[i], expected, 1e-4) << i;
    }
}

TEST(ConfidenceVolume, ConstantRawValuesNormalizeToZero) {
    std::vector<float> v(10, 3.5f);
    normalize_confidence(v, std::vector<bool>(10, true));
    for (float x : v) EXPECT_EQ(x, 0.0f);

    std::vector<float> w{1.0f, 3.0f, 100.0f, 2.0f};
    normalize_confidence(w, {true, true, false, true});
    EXPECT_EQ(w, (std::vector<float>{0.0f, 1.0f, 0.0f, 0.5f}));
}

TEST(ConfidenceVolume, ZeroParametersGiveZeroVolume) {
    std::mt19937_64 rng(14);
    const GrayImage img = normalize(oracle::random_image(10, 9, rng));
    const auto vol = confidence_volume(NetworkParams<float>::zeros(), img, img, 2);
    for (float v : vol.conf) EXPECT_EQ(v, 0.0f);
}

TEST(ModelFile, RoundTripAndCorruption) {
    testutil::TempDir dir;
    auto params = init_params(15);
    params.layers[2].bias(7) = 0.25f;
    const std::string path = dir.file("m.bin");
    save_model(params, path);
    EXPECT_TRUE(load_model(path) == params);

    const std::string bytes = testutil::read_bytes(path);
    EXPECT_EQ(bytes.substr(0, 8), "GCPCNN01");
    EXPECT_EQ(bytes.size(), 8 + 4 + 16 * 4 + 4 * params.parameter_count());

    testutil::write_bytes(dir.file("t.bin"), bytes.substr(0, bytes.size() - 4));
    EXPECT_THROW(load_model(dir.file("t.bin")), FormatError);
    testutil::write_bytes(dir.file("x.bin"), bytes + "x");
    EXPECT_THROW(load_model(dir.file("x.bin")), FormatError);
    testutil::write_bytes(dir.file("m2.bin"), "NOTAMODEL" + bytes);
    EXPECT_THROW(load_model(dir.file("m2.bin")), FormatError);
    EXPECT_THROW(load_model(dir.file("missing.bin")), IoError);
}
