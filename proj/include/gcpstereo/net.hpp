#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcpstereo/cost.hpp"
#include "gcpstereo/error.hpp"
#include "gcpstereo/image.hpp"

namespace gcps {

// Siamese feature extractor: four valid 3x3 convolutions with 64 maps each,
// every one followed by ReLU. A 9x9 patch shrinks 9 -> 7 -> 5 -> 3 -> 1, so
// each branch emits exactly one 64-vector; the matching confidence is the
// inner product of the two branch outputs.
inline constexpr int kPatchSize = 9;
inline constexpr int kPatchRadius = kPatchSize / 2;
inline constexpr int kPatchArea = kPatchSize * kPatchSize;
inline constexpr int kKernelSize = 3;
inline constexpr int kKernelTaps = kKernelSize * kKernelSize;
inline constexpr int kLayerCount = 4;
inline constexpr int kFeatureMaps = 64;

static_assert(kPatchSize - kLayerCount * (kKernelSize - 1) == 1, "conv stack must reduce a patch to 1x1");

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct ConvLayer {
    int in_maps = 0;
    int out_maps = 0;
    /// out_maps x (taps * in_maps); column (ky*3 + kx)*in_maps + c.
    Matrix<T> weights;
    Vector<T> bias;

    ConvLayer() = default;
    ConvLayer(int in, int out)
        : in_maps(in), out_maps(out), weights(Matrix<T>::Zero(out, kKernelTaps * in)), bias(Vector<T>::Zero(out)) {}

    T& weight(int o, int ky, int kx, int c) { return weights(o, (ky * kKernelSize + kx) * in_maps + c); }
    T weight(int o, int ky, int kx, int c) const { return weights(o, (ky * kKernelSize + kx) * in_maps + c); }
    int fan_in() const { return kKernelTaps * in_maps; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(weights.size() + bias.size()); }
};

template <class T>
struct NetworkParams {
    std::array<ConvLayer<T>, kLayerCount> layers;

    /// All-zero parameters with the fixed architecture.
    static NetworkParams zeros() {
        NetworkParams p;
        for (int l = 0; l < kLayerCount; ++l) p.layers[l] = ConvLayer<T>(l == 0 ? 1 : kFeatureMaps, kFeatureMaps);
        return p;
    }

    template <class U>
    NetworkParams<U> cast() const {
        NetworkParams<U> out;
        for (int l = 0; l < kLayerCount; ++l) {
            out.layers[l].in_maps = layers[l].in_maps;
            out.layers[l].out_maps = layers[l].out_maps;
            out.layers[l].weights = layers[l].weights.template cast<U>();
            out.layers[l].bias = layers[l].bias.template cast<U>();
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.parameter_count();
        return n;
    }

    bool all_finite() const {
        return std::all_of(layers.begin(), layers.end(),
                           [](const ConvLayer<T>& l) { return l.weights.allFinite() && l.bias.allFinite(); });
    }

    void set_zero() {
        for (auto& l : layers) {
            l.weights.setZero();
            l.bias.setZero();
        }
    }

    /// this += alpha * other
    void axpy(T alpha, const NetworkParams& other) {
        for (int l = 0; l < kLayerCount; ++l) {
            layers[l].weights += alpha * other.layers[l].weights;
            layers[l].bias += alpha * other.layers[l].bias;
        }
    }

    bool operator==(const NetworkParams& o) const {
        for (int l = 0; l < kLayerCount; ++l) {
            if (layers[l].weights != o.layers[l].weights || layers[l].bias != o.layers[l].bias) return false;
        }
        return true;
    }
};

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases.
template <class T = float>
NetworkParams<T> init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto p = NetworkParams<T>::zeros();
    for (auto& layer : p.layers) {
        const double bound = std::sqrt(1.0 / layer.fan_in());
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
            for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) layer.weights(i, j) = static_cast<T>(dist(rng));
        }
    }
    return p;
}

/// Channels x (height*width) activations; column y*width + x holds one pixel.
template <class T>
struct FeatureMap {
    int width = 0;
    int height = 0;
    Matrix<T> data;

    int channels() const { return static_cast<int>(data.rows()); }
    Eigen::Index column(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
};

namespace detail {

template <class T>
void im2col(const FeatureMap<T>& in, Matrix<T>& col) {
    const int cin = in.channels();
    const int wo = in.width - (kKernelSize - 1);
    const int ho = in.height - (kKernelSize - 1);
    col.resize(static_cast<Eigen::Index>(kKernelTaps) * cin, static_cast<Eigen::Index>(wo) * ho);
    for (int y = 0; y < ho; ++y) {
        for (int x = 0; x < wo; ++x) {
            const Eigen::Index j = static_cast<Eigen::Index>(y) * wo + x;
            for (int ky = 0; ky < kKernelSize; ++ky) {
                for (int kx = 0; kx < kKernelSize; ++kx) {
                    col.block(static_cast<Eigen::Index>(ky * kKernelSize + kx) * cin, j, cin, 1) =
                        in.data.col(in.column(x + kx, y + ky));
                }
            }
        }
    }
}

template <class T>
void col2im_add(const Matrix<T>& col, FeatureMap<T>& in) {
    const int cin = in.channels();
    const int wo = in.width - (kKernelSize - 1);
    const int ho = in.height - (kKernelSize - 1);
    for (int y = 0; y < ho; ++y) {
        for (int x = 0; x < wo; ++x) {
            const Eigen::Index j = static_cast<Eigen::Index>(y) * wo + x;
            for (int ky = 0; ky < kKernelSize; ++ky) {
                for (int kx = 0; kx < kKernelSize; ++kx) {
                    in.data.col(in.column(x + kx, y + ky)) +=
                        col.block(static_cast<Eigen::Index>(ky * kKernelSize + kx) * cin, j, cin, 1);
                }
            }
        }
    }
}

}  // namespace detail

/// Forward activations of one branch, kept for backpropagation.
template <class T>
struct ForwardTrace {
    std::array<Matrix<T>, kLayerCount> cols;
    std::array<FeatureMap<T>, kLayerCount + 1> acts;  // acts[0] is the input

    const FeatureMap<T>& output() const { return acts[kLayerCount]; }
};

/// Valid convolutions over a whole single-channel input of at least 9x9.
/// Output is (width-8) x (height-8) x 64.
template <class T>
void forward(const NetworkParams<T>& params, FeatureMap<T> input, ForwardTrace<T>& trace) {
    if (input.channels() != 1 || input.width < kPatchSize || input.height < kPatchSize) {
        throw DimensionMismatch("network input must be single-channel and at least 9x9");
    }
    trace.acts[0] = std::move(input);
    for (int l = 0; l < kLayerCount; ++l) {
        const auto& layer = params.layers[l];
        const auto& in = trace.acts[l];
        detail::im2col(in, trace.cols[l]);
        FeatureMap<T>& out = trace.acts[l + 1];
        out.width = in.width - (kKernelSize - 1);
        out.height = in.height - (kKernelSize - 1);
        out.data.noalias() = layer.weights * trace.cols[l];
        out.data.colwise() += layer.bias;
        out.data = out.data.cwiseMax(T(0));
    }
}

/// Accumulates parameter gradients given d(loss)/d(output activations).
template <class T>
void backward(const NetworkParams<T>& params, const ForwardTrace<T>& trace, Matrix<T> grad_out,
              NetworkParams<T>& grad) {
    for (int l = kLayerCount - 1; l >= 0; --l) {
        const auto& out = trace.acts[l + 1].data;
        // ReLU: out > 0 exactly where the pre-activation was positive.
        grad_out = (out.array() > T(0)).select(grad_out, T(0));
        grad.layers[l].weights.noalias() += grad_out * trace.cols[l].transpose();
        grad.layers[l].bias += grad_out.rowwise().sum();
        if (l == 0) break;
        const Matrix<T> dcol = params.layers[l].weights.transpose() * grad_out;
        FeatureMap<T> din;
        din.width = trace.acts[l].width;
        din.height = trace.acts[l].height;
        din.data = Matrix<T>::Zero(trace.acts[l].channels(), trace.acts[l].data.cols());
        detail::col2im_add(dcol, din);
        grad_out = std::move(din.data);
    }
}

using Patch = std::array<float, kPatchArea>;

template <class T>
FeatureMap<T> patch_input(const Patch& patch) {
    FeatureMap<T> in;
    in.width = kPatchSize;
    in.height = kPatchSize;
    in.data.resize(1, kPatchArea);
    for (int i = 0; i < kPatchArea; ++i) in.data(0, i) = static_cast<T>(patch[i]);
    return in;
}

/// 64-dimensional descriptor of one 9x9 patch.
template <class T>
Vector<T> forward_patch(const NetworkParams<T>& params, const Patch& patch) {
    ForwardTrace<T> trace;
    forward(params, patch_input<T>(patch), trace);
    return trace.output().data.col(0);
}

template <class T>
Vector<T> forward_patch(const NetworkParams<T>& params, std::span<const float> patch) {
    if (patch.size() != static_cast<std::size_t>(kPatchArea)) {
        throw DimensionMismatch("patch must have 81 values, got " + std::to_string(patch.size()));
    }
    Patch p;
    std::copy(patch.begin(), patch.end(), p.begin());
    return forward_patch(params, p);
}

/// Inner product of the two branch descriptors.
template <class T>
T confidence(const NetworkParams<T>& params, const Patch& left, const Patch& right) {
    return forward_patch(params, left).dot(forward_patch(params, right));
}

/// max(0, epsilon + s_neg - s_pos)
template <class T>
T hinge_loss(T s_pos, T s_neg, T epsilon) {
    return std::max(T(0), epsilon + s_neg - s_pos);
}

/// 9x9 window centered at (x, y) with clamp-to-edge reads.
inline Patch extract_patch(const GrayImage& img, int x, int y) {
    Patch p;
    for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
        for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
            p[(dy + kPatchRadius) * kPatchSize + dx + kPatchRadius] = img.clamped(x + dx, y + dy);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Training examples

struct TrainConfig {
    double epsilon = 0.2;
    double lr = 0.003;
    int epochs = 20;
    /// Stereo pairs per SGD step; each pair contributes all its sampled examples.
    int batch_size = 1;
    int n_low = 4;
    int n_high = 8;
    int p_high = 1;
    std::uint64_t seed = 1;
    /// Output rows per forward strip; bounds memory on large images.
    int strip_rows = 32;

    void validate() const {
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
        if (n_low <= 0 || n_low > n_high) throw ConfigError("need 0 < n_low <= n_high");
        if (p_high < 0) throw ConfigError("p_high must be non-negative");
        if (strip_rows < 1) throw ConfigError("strip_rows must be at least 1");
    }
};

enum class Polarity { Positive, Negative };

struct TrainingExample {
    Patch left_patch;
    Patch right_patch;
    Polarity polarity;
};

/// One sampled location: the left patch at (x, y) is paired with right patches
/// centered at x - d_true + o_pos (positive) and x - d_true + o_neg (negative).
struct SampledPair {
    int x = 0;
    int y = 0;
    int d_true = 0;
    int o_pos = 0;
    int o_neg = 0;

    int pos_x() const { return x - d_true + o_pos; }
    int neg_x() const { return x - d_true + o_neg; }
};

/// Positive and negative example sharing one left patch.
struct ExamplePair {
    TrainingExample positive;
    TrainingExample negative;
};

inline ExamplePair make_example_pair(const GrayImage& left, const GrayImage& right, const SampledPair& s) {
    const Patch l = extract_patch(left, s.x, s.y);
    return {{l, extract_patch(right, s.pos_x(), s.y), Polarity::Positive},
            {l, extract_patch(right, s.neg_x(), s.y), Polarity::Negative}};
}

/// Draw one positive and one negative example for every usable ground-truth
/// pixel. A pixel is usable when its left patch lies inside the image, every
/// positive offset keeps the right patch inside, and at least one negative
/// offset does; o_neg is drawn uniformly from the offsets that fit.
inline std::vector<SampledPair> sample_examples(const GrayImage& left, const GrayImage& right, const GroundTruth& gt,
                                                const TrainConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    detail::require_same_size(left.width, left.height, right.width, right.height, "stereo pair");
    detail::require_same_size(left.width, left.height, gt.width, gt.height, "ground truth");
    if (gt.known_count() == 0) throw DegenerateInput("ground truth has no known disparities");

    const int lo = kPatchRadius;
    const int hi_x = left.width - 1 - kPatchRadius;
    const int hi_y = left.height - 1 - kPatchRadius;
    auto inside = [&](int cx) { return cx >= lo && cx <= hi_x; };

    std::vector<SampledPair> out;
    std::vector<int> feasible;
    for (int y = lo; y <= hi_y; ++y) {
        for (int x = lo; x <= hi_x; ++x) {
            const auto& g = gt.at(x, y);
            if (!g) continue;
            const int dt = static_cast<int>(std::lround(*g));
            const int c = x - dt;
            if (!inside(c - cfg.p_high) || !inside(c + cfg.p_high)) continue;
            feasible.clear();
            for (int o = -cfg.n_high; o <= -cfg.n_low; ++o) {
                if (inside(c + o)) feasible.push_back(o);
            }
            for (int o = cfg.n_low; o <= cfg.n_high; ++o) {
                if (inside(c + o)) feasible.push_back(o);
            }
            if (feasible.empty()) continue;
            SampledPair s;
            s.x = x;
            s.y = y;
            s.d_true = dt;
            s.o_pos = std::uniform_int_distribution<int>(-cfg.p_high, cfg.p_high)(rng);
            s.o_neg = feasible[std::uniform_int_distribution<std::size_t>(0, feasible.size() - 1)(rng)];
            out.push_back(s);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loss and gradients

/// Summed hinge loss over patch-level example pairs; adds the gradient into
/// `grad` when given.
template <class T>
T loss_and_gradient(const NetworkParams<T>& params, std::span<const ExamplePair> batch, T epsilon,
                    NetworkParams<T>* grad) {
    T loss = 0;
    ForwardTrace<T> tl, tp, tn;
    for (const auto& ex : batch) {
        forward(params, patch_input<T>(ex.positive.left_patch), tl);
        forward(params, patch_input<T>(ex.positive.right_patch), tp);
        forward(params, patch_input<T>(ex.negative.right_patch), tn);
        const auto fl = tl.output().data.col(0);
        const auto fp = tp.output().data.col(0);
        const auto fn = tn.output().data.col(0);
        const T s_pos = fl.dot(fp);
        const T s_neg = fl.dot(fn);
        const T term = hinge_loss(s_pos, s_neg, epsilon);
        loss += term;
        if (grad == nullptr || !(term > T(0))) continue;
        backward<T>(params, tl, fn - fp, *grad);
        backward<T>(params, tp, -fl, *grad);
        backward<T>(params, tn, fl, *grad);
    }
    return loss;
}

namespace detail {

/// Rows [y0 - r, y1 + r) of `img`, all columns, as a one-channel map.
template <class T>
FeatureMap<T> strip_input(const GrayImage& img, int y0, int y1) {
    FeatureMap<T> in;
    in.width = img.width;
    in.height = (y1 - y0) + 2 * kPatchRadius;
    in.data.resize(1, static_cast<Eigen::Index>(in.width) * in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) in.data(0, in.column(x, y)) = img.at(x, y0 - kPatchRadius + y);
    }
    return in;
}

}  // namespace detail

/// Summed hinge loss over all sampled pairs of one stereo pair, computing each
/// branch's features once per strip of rows. Matches loss_and_gradient over
/// the equivalent patches. `grad` may be null for a forward-only pass.
template <class T>
double image_loss_and_gradient(const NetworkParams<T>& params, const GrayImage& left, const GrayImage& right,
                               std::span<const SampledPair> sites, T epsilon, int strip_rows, NetworkParams<T>* grad) {
    detail::require_same_size(left.width, left.height, right.width, right.height, "stereo pair");
    if (sites.empty()) return 0.0;
    std::vector<SampledPair> sorted(sites.begin(), sites.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.y < b.y; });

    const int fw = left.width - 2 * kPatchRadius;  // feature columns map to x - r
    double loss = 0.0;
    ForwardTrace<T> tl, tr;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const int y0 = sorted[i].y;
        const int y1 = std::min(y0 + strip_rows, left.height - kPatchRadius);
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].y < y1) ++j;

        forward(params, detail::strip_input<T>(left, y0, y1), tl);
        forward(params, detail::strip_input<T>(right, y0, y1), tr);
        const Matrix<T>& fl = tl.output().data;
        const Matrix<T>& fr = tr.output().data;
        Matrix<T> gl, gr;
        if (grad != nullptr) {
            gl = Matrix<T>::Zero(fl.rows(), fl.cols());
            gr = Matrix<T>::Zero(fr.rows(), fr.cols());
        }
        bool any_active = false;
        for (std::size_t k = i; k < j; ++k) {
            const auto& s = sorted[k];
            const Eigen::Index row = static_cast<Eigen::Index>(s.y - y0) * fw;
            const Eigen::Index cl = row + (s.x - kPatchRadius);
            const Eigen::Index cp = row + (s.pos_x() - kPatchRadius);
            const Eigen::Index cn = row + (s.neg_x() - kPatchRadius);
            const T s_pos = fl.col(cl).dot(fr.col(cp));
            const T s_neg = fl.col(cl).dot(fr.col(cn));
            const T term = hinge_loss(s_pos, s_neg, epsilon);
            loss += static_cast<double>(term);
            if (grad == nullptr || !(term > T(0))) continue;
            any_active = true;
            gl.col(cl) += fr.col(cn) - fr.col(cp);
            gr.col(cp) -= fl.col(cl);
            gr.col(cn) += fl.col(cl);
        }
        if (any_active) {
            backward<T>(params, tl, std::move(gl), *grad);
            backward<T>(params, tr, std::move(gr), *grad);
        }
        i = j;
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Training

/// Raw (un-normalized) stereo pair with ground truth.
struct TrainingFrame {
    GrayImage left;
    GrayImage right;
    GroundTruth gt;
};

struct TrainResult {
    NetworkParams<float> params;
    /// loss_trace[0] is the mean hinge loss of the initial parameters;
    /// loss_trace[e] is the mean loss observed while training epoch e.
    std::vector<double> loss_trace;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Minibatch SGD on the summed hinge loss. Each step moves the parameters by
/// -lr times the batch gradient divided by the number of example pairs in the
/// batch. Images are normalized here.
inline TrainResult train(std::span<const TrainingFrame> dataset, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (dataset.empty()) throw DegenerateInput("training dataset is empty");

    struct Prepared {
        GrayImage left, right;
        const GroundTruth* gt;
    };
    std::vector<Prepared> frames;
    frames.reserve(dataset.size());
    for (const auto& f : dataset) frames.push_back({normalize(f.left), normalize(f.right), &f.gt});

    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    result.params = init_params<float>(cfg.seed);
    auto& params = result.params;
    const auto eps = static_cast<float>(cfg.epsilon);

    auto check = [](double mean, int epoch) {
        if (!std::isfinite(mean)) {
            throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
        }
    };

    {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& f : frames) {
            const auto sites = sample_examples(f.left, f.right, *f.gt, cfg, rng);
            total += image_loss_and_gradient<float>(params, f.left, f.right, sites, eps, cfg.strip_rows, nullptr);
            n += sites.size();
        }
        if (n == 0) throw DegenerateInput("no usable training examples in dataset");
        const double mean = total / static_cast<double>(n);
        check(mean, 0);
        result.loss_trace.push_back(mean);
        if (on_epoch) on_epoch(0, mean);
    }

    std::vector<std::size_t> order(frames.size());
    auto grad = NetworkParams<float>::zeros();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        std::size_t epoch_n = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            grad.set_zero();
            double batch_loss = 0.0;
            std::size_t batch_n = 0;
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            for (std::size_t k = b; k < e; ++k) {
                const auto& f = frames[order[k]];
                const auto sites = sample_examples(f.left, f.right, *f.gt, cfg, rng);
                batch_loss +=
                    image_loss_and_gradient<float>(params, f.left, f.right, sites, eps, cfg.strip_rows, &grad);
                batch_n += sites.size();
            }
            if (!std::isfinite(batch_loss)) check(batch_loss, epoch);
            if (batch_n == 0) continue;
            epoch_total += batch_loss;
            epoch_n += batch_n;
            if (cfg.lr > 0.0) params.axpy(static_cast<float>(-cfg.lr / static_cast<double>(batch_n)), grad);
        }
        const double mean = epoch_n > 0 ? epoch_total / static_cast<double>(epoch_n) : 0.0;
        check(mean, epoch);
        if (!params.all_finite()) throw DivergenceError("training diverged: non-finite weights in epoch " +
                                                        std::to_string(epoch));
        result.loss_trace.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dense inference

/// Matching confidence per (pixel, disparity), pixel-major like CostVolume.
struct ConfidenceVolume {
    int width = 0;
    int height = 0;
    int d_max = 0;
    std::vector<float> conf;

    ConfidenceVolume() = default;
    ConfidenceVolume(int w, int h, int dmax) : width(w), height(h), d_max(dmax) {
        if (w <= 0 || h <= 0) throw DegenerateInput("confidence volume dimensions must be positive");
        if (dmax < 0) throw DegenerateInput("d_max must be non-negative");
        conf.assign(static_cast<std::size_t>(w) * h * (dmax + 1), 0.0f);
    }

    std::size_t index(int x, int y, int d) const {
        return (static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(d_max + 1) + d;
    }
    float& at(int x, int y, int d) { return conf[index(x, y, d)]; }
    float at(int x, int y, int d) const { return conf[index(x, y, d)]; }
    std::span<const float> pixel(std::size_t p) const {
        return {conf.data() + p * static_cast<std::size_t>(d_max + 1), static_cast<std::size_t>(d_max + 1)};
    }
};

/// Descriptor of every pixel, equal to forward_patch on its clamp-to-edge
/// 9x9 neighbourhood. Returned as 64 x (width*height).
template <class T>
Matrix<T> dense_features(const NetworkParams<T>& params, const GrayImage& img, int strip_rows = 64) {
    const int W = img.width;
    const int H = img.height;
    Matrix<T> features(kFeatureMaps, static_cast<Eigen::Index>(W) * H);
    ForwardTrace<T> trace;
    for (int y0 = 0; y0 < H; y0 += strip_rows) {
        const int y1 = std::min(H, y0 + strip_rows);
        FeatureMap<T> in;
        in.width = W + 2 * kPatchRadius;
        in.height = (y1 - y0) + 2 * kPatchRadius;
        in.data.resize(1, static_cast<Eigen::Index>(in.width) * in.height);
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                in.data(0, in.column(x, y)) = img.clamped(x - kPatchRadius, y0 + y - kPatchRadius);
            }
        }
        forward(params, std::move(in), trace);
        const auto& out = trace.output().data;
        features.middleCols(static_cast<Eigen::Index>(y0) * W, out.cols()) = out;
    }
    return features;
}

/// Min-max normalization of raw confidences into [0,1]. Entries with
/// valid[i] == false are excluded from the range and set to 0; a constant
/// volume maps to all zeros.
inline void normalize_confidence(std::vector<float>& values, const std::vector<bool>& valid) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!valid[i]) continue;
        lo = std::min(lo, static_cast<double>(values[i]));
        hi = std::max(hi, static_cast<double>(values[i]));
    }
    if (!(hi > lo)) {
        std::fill(values.begin(), values.end(), 0.0f);
        return;
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = valid[i] ? static_cast<float>(std::clamp((values[i] - lo) / span, 0.0, 1.0)) : 0.0f;
    }
}

/// Raw inner products F_L(p) . F_R(p - d); `valid` marks entries whose match
/// lies inside the image (the others hold 0).
template <class T>
std::vector<float> raw_confidence_volume(const NetworkParams<T>& params, const GrayImage& left,
                                         const GrayImage& right, int d_max, std::vector<bool>& valid) {
    detail::require_same_size(left.width, left.height, right.width, right.height, "stereo pair");
    if (d_max < 0) throw DegenerateInput("d_max must be non-negative");
    const Matrix<T> fl = dense_features(params, left);
    const Matrix<T> fr = dense_features(params, right);
    const int W = left.width;
    const int H = left.height;
    const std::size_t D = static_cast<std::size_t>(d_max) + 1;
    std::vector<float> raw(static_cast<std::size_t>(W) * H * D, 0.0f);
    valid.assign(raw.size(), false);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const Eigen::Index p = static_cast<Eigen::Index>(y) * W + x;
            const std::size_t base = static_cast<std::size_t>(p) * D;
            for (int d = 0; d <= d_max && x - d >= 0; ++d) {
                raw[base + d] = static_cast<float>(fl.col(p).dot(fr.col(p - d)));
                valid[base + d] = true;
            }
        }
    }
    return raw;
}

/// Dense confidence volume normalized into [0,1]; `left` and `right` are
/// expected to be normalized images.
template <class T>
ConfidenceVolume confidence_volume(const NetworkParams<T>& params, const GrayImage& left, const GrayImage& right,
                                   int d_max) {
    std::vector<bool> valid;
    std::vector<float> raw = raw_confidence_volume(params, left, right, d_max, valid);
    normalize_confidence(raw, valid);
    ConfidenceVolume vol(left.width, left.height, d_max);
    vol.conf = std::move(raw);
    return vol;
}

// ---------------------------------------------------------------------------
// Model file: "GCPCNN01", u32 layer count, per layer u32 (kernel_h, kernel_w,
// in_maps, out_maps), then per layer the weights in (out, ky, kx, in) order
// followed by the out_maps biases, all little-endian f32.

inline constexpr char kModelMagic[8] = {'G', 'C', 'P', 'C', 'N', 'N', '0', '1'};

inline void save_model(const NetworkParams<float>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kModelMagic, sizeof(kModelMagic));
    detail::put_u32(out, kLayerCount);
    for (const auto& l : params.layers) {
        detail::put_u32(out, kKernelSize);
        detail::put_u32(out, kKernelSize);
        detail::put_u32(out, static_cast<std::uint32_t>(l.in_maps));
        detail::put_u32(out, static_cast<std::uint32_t>(l.out_maps));
    }
    for (const auto& l : params.layers) {
        for (int o = 0; o < l.out_maps; ++o) {
            for (Eigen::Index j = 0; j < l.weights.cols(); ++j) detail::put_f32(out, l.weights(o, j));
        }
        for (int o = 0; o < l.out_maps; ++o) detail::put_f32(out, l.bias(o));
    }
    if (!out) throw IoError("writing '" + path + "' failed");
}

inline NetworkParams<float> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model '" + path + "'");
    char magic[sizeof(kModelMagic)];
    if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kModelMagic)) {
        throw FormatError("'" + path + "' is not a model file");
    }
    if (detail::get_u32(in) != kLayerCount) throw FormatError("'" + path + "': unexpected layer count");
    auto params = NetworkParams<float>::zeros();
    for (const auto& l : params.layers) {
        const auto kh = detail::get_u32(in);
        const auto kw = detail::get_u32(in);
        const auto cin = detail::get_u32(in);
        const auto cout = detail::get_u32(in);
        if (kh != kKernelSize || kw != kKernelSize || cin != static_cast<std::uint32_t>(l.in_maps) ||
            cout != static_cast<std::uint32_t>(l.out_maps)) {
            throw FormatError("'" + path + "': layer dimensions do not match the architecture");
        }
    }
    for (auto& l : params.layers) {
        for (int o = 0; o < l.out_maps; ++o) {
            for (Eigen::Index j = 0; j < l.weights.cols(); ++j) l.weights(o, j) = detail::get_f32(in);
        }
        for (int o = 0; o < l.out_maps; ++o) l.bias(o) = detail::get_f32(in);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("'" + path + "': trailing bytes");
    if (!params.all_finite()) throw FormatError("'" + path + "': non-finite weights");
    return params;
}

}  // namespace gcps
