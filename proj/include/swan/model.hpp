#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "swan/angle.hpp"
#include "swan/error.hpp"
#include "swan/log.hpp"
#include "swan/matrix.hpp"
#include "swan/ndcore.hpp"
#include "swan/rng.hpp"
#include "swan/wavelet.hpp"

namespace swan {

/// Hidden widths of the encoder (l1..l3) and the forward model (l6..l8).
struct LayerWidths {
    std::array<std::size_t, 3> encoder{128, 32, 32};
    std::array<std::size_t, 3> forward{48, 48, 48};

    friend bool operator==(const LayerWidths&, const LayerWidths&) = default;
};

/// "h1,h2,h3/g1,g2,g3"
inline std::string format_widths(const LayerWidths& w) {
    std::ostringstream os;
    os << w.encoder[0] << ',' << w.encoder[1] << ',' << w.encoder[2] << '/' << w.forward[0] << ','
       << w.forward[1] << ',' << w.forward[2];
    return os.str();
}

inline LayerWidths parse_widths(const std::string& text) {
    LayerWidths w;
    const auto slash = text.find('/');
    if (slash == std::string::npos)
        throw Error(ErrorCode::InvalidConfig, "widths must look like h1,h2,h3/g1,g2,g3");
    const auto parse3 = [&](const std::string& part, std::array<std::size_t, 3>& out) {
        std::istringstream is(part);
        std::string tok;
        std::size_t i = 0;
        while (std::getline(is, tok, ',')) {
            if (i >= 3) throw Error(ErrorCode::InvalidConfig, "too many widths in '" + part + "'");
            std::size_t pos = 0;
            long long v = 0;
            try {
                v = std::stoll(tok, &pos);
            } catch (...) {
                throw Error(ErrorCode::InvalidConfig, "bad width '" + tok + "'");
            }
            if (pos != tok.size() || v < 1) throw Error(ErrorCode::InvalidConfig, "bad width '" + tok + "'");
            out[i++] = static_cast<std::size_t>(v);
        }
        if (i != 3) throw Error(ErrorCode::InvalidConfig, "expected three widths in '" + part + "'");
    };
    parse3(text.substr(0, slash), w.encoder);
    parse3(text.substr(slash + 1), w.forward);
    return w;
}

struct SwanArchitecture {
    std::size_t coefficients = 0; // K
    std::size_t endmembers = 0;   // e
    LayerWidths widths;
    double dropout = 0.3;

    std::size_t input_dim() const noexcept { return 2 * coefficients; }
    friend bool operator==(const SwanArchitecture&, const SwanArchitecture&) = default;
};

/// Layer slots in evaluation order. The decoder heads l5a/l5d have no bias
/// so their weight columns are exactly the wavelet coefficients of the
/// estimated endmembers.
enum LayerSlot : std::size_t { L1, L2, L3, L4, L5A, L5D, L6, L7, L8, L9, kLayerCount };

inline constexpr std::array<const char*, kLayerCount> kLayerNames{"l1",  "l2", "l3", "l4", "l5a",
                                                                  "l5d", "l6", "l7", "l8", "l9"};

struct SwanModel {
    SwanArchitecture arch;
    std::array<DenseLayer, kLayerCount> layers;

    DenseLayer& operator[](LayerSlot s) { return layers[s]; }
    const DenseLayer& operator[](LayerSlot s) const { return layers[s]; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.parameter_count();
        return n;
    }

    std::vector<std::span<double>> parameter_blocks() {
        std::vector<std::span<double>> out;
        for (auto& l : layers) {
            out.emplace_back(l.weights.flat());
            if (l.has_bias) out.emplace_back(l.bias);
        }
        return out;
    }

    friend bool operator==(const SwanModel&, const SwanModel&) = default;
};

/// Gradient buffers shaped like a SwanModel's parameters.
struct ModelGradients {
    std::array<Matrix, kLayerCount> weights;
    std::array<Vec, kLayerCount> bias;

    ModelGradients() = default;
    explicit ModelGradients(const SwanModel& m) {
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            weights[i] = Matrix(m.layers[i].out_dim(), m.layers[i].in_dim());
            bias[i] = Vec(m.layers[i].bias.size(), 0.0);
        }
    }

    void zero() {
        for (auto& w : weights) w.fill(0.0);
        for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
    }

    void add(const ModelGradients& o) {
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            auto dst = weights[i].flat();
            auto src = o.weights[i].flat();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            for (std::size_t k = 0; k < bias[i].size(); ++k) bias[i][k] += o.bias[i][k];
        }
    }

    std::vector<std::span<const double>> blocks(const SwanModel& m) const {
        std::vector<std::span<const double>> out;
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            out.emplace_back(weights[i].flat());
            if (m.layers[i].has_bias) out.emplace_back(bias[i]);
        }
        return out;
    }
};

/// Wires l1..l9 and draws Glorot-uniform weights from `seed`.
inline SwanModel build(std::size_t coefficients, std::size_t endmembers,
                       const std::optional<LayerWidths>& widths = std::nullopt, std::uint64_t seed = 0,
                       double dropout = 0.3) {
    if (coefficients < 1 || endmembers < 2 || endmembers > coefficients)
        throw Error(ErrorCode::InvalidDims, "need K >= 1 and 2 <= e <= K (K=" + std::to_string(coefficients) +
                                                ", e=" + std::to_string(endmembers) + ")");
    SwanModel m;
    m.arch = {coefficients, endmembers, widths.value_or(LayerWidths{}), dropout};
    const auto& enc = m.arch.widths.encoder;
    const auto& fwd = m.arch.widths.forward;
    for (std::size_t w : enc)
        if (w == 0) throw Error(ErrorCode::InvalidDims, "zero encoder width");
    for (std::size_t w : fwd)
        if (w == 0) throw Error(ErrorCode::InvalidDims, "zero forward width");

    const std::size_t K = coefficients, e = endmembers;
    m[L1] = DenseLayer(2 * K, enc[0], Activation::Sigmoid, dropout);
    m[L2] = DenseLayer(enc[0], enc[1], Activation::Sigmoid, dropout);
    m[L3] = DenseLayer(enc[1], enc[2], Activation::Sigmoid, dropout);
    m[L4] = DenseLayer(enc[2], e, Activation::Softmax);
    m[L5A] = DenseLayer(e, K, Activation::ReLU, 0.0, false);
    m[L5D] = DenseLayer(e, K, Activation::ReLU, 0.0, false);
    m[L6] = DenseLayer(K, fwd[0], Activation::Sigmoid, dropout);
    m[L7] = DenseLayer(fwd[0], fwd[1], Activation::Sigmoid, dropout);
    m[L8] = DenseLayer(fwd[1], fwd[2], Activation::Sigmoid, dropout);
    m[L9] = DenseLayer(fwd[2], K, Activation::ReLU);

    RngStream rng(seed, 0x1417);
    for (auto& layer : m.layers) glorot_uniform(layer, rng);

    log("built SWAN K=" + std::to_string(K) + " e=" + std::to_string(e) + " widths=" +
        format_widths(m.arch.widths) + " trainable parameters=" + std::to_string(m.parameter_count()));
    return m;
}

struct TrainConfig {
    std::size_t batch_size = 50;
    std::size_t epochs = 100;
    double lambda1 = 0.1;
    double lambda2 = 0.01;
    double learning_rate = 1e-3;
    double dropout = 0.3;
    double noise_sigma = 0.02;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw Error(ErrorCode::InvalidConfig, "train_fraction must lie in (0, 1)");
        if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
            throw Error(ErrorCode::InvalidConfig, "regularisation weights must be >= 0");
        if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise sigma must be >= 0");
        if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning rate must be > 0");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw Error(ErrorCode::InvalidConfig, "dropout must lie in [0, 1)");
    }
};

struct LossBreakdown {
    double l5a_term = 0.0;
    double l5d_term = 0.0;
    double l9_term = 0.0;
    double l2_reg = 0.0;
    double l1_reg = 0.0;
    double total = 0.0;
    std::size_t guarded_detail = 0; // samples whose detail angle was skipped (zero norm)
};

// ---------------------------------------------------------------------------
// Loss terms

/// Below this norm a detail vector carries no angular information.
inline constexpr double kDetailNormFloor = 1e-12;
/// Angle gradients vanish when |cos| is within this of 1 (arccos' is singular).
inline constexpr double kParallelCosine = 1.0 - 1e-12;

namespace detail {

struct AngleWithGrad {
    double value = 0.0;
    Vec grad; // d angle / d u
};

// Angle between target x and estimate u, with the gradient w.r.t. u.
inline AngleWithGrad angle_and_grad(std::span<const double> x, std::span<const double> u, bool want_grad) {
    const double nx = norm2(x);
    const double nu = norm2(u);
    if (nx == 0.0 || nu == 0.0) throw Error(ErrorCode::ZeroNormVector, "spectral angle of a zero vector");
    const double c = std::clamp(dot(x, u) / (nx * nu), -1.0, 1.0);
    AngleWithGrad out{std::acos(c), {}};
    if (!want_grad) return out;
    out.grad.assign(u.size(), 0.0);
    if (std::abs(c) >= kParallelCosine) return out;
    const double scale = -1.0 / std::sqrt(1.0 - c * c);
    for (std::size_t i = 0; i < u.size(); ++i)
        out.grad[i] = scale * (x[i] / (nx * nu) - c * u[i] / (nu * nu));
    return out;
}

inline double squared_error(std::span<const double> x, std::span<const double> u) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - u[i];
        s += d * d;
    }
    return s;
}

inline void check_batch(std::size_t a, std::size_t b) {
    if (a == 0) throw Error(ErrorCode::DimensionMismatch, "empty batch");
    if (a != b) throw Error(ErrorCode::DimensionMismatch, "batch operands differ in size");
}

} // namespace detail

/// Mean squared-error plus mean spectral angle between x_a and (x_hat_a + n).
/// `noise` may be empty (treated as zero).
inline double loss_l5a(std::span<const Vec> approx, std::span<const Vec> approx_hat,
                       std::span<const Vec> noise = {}) {
    detail::check_batch(approx.size(), approx_hat.size());
    if (!noise.empty() && noise.size() != approx.size())
        throw Error(ErrorCode::DimensionMismatch, "noise batch size differs");
    double mse = 0.0, angle = 0.0;
    for (std::size_t i = 0; i < approx.size(); ++i) {
        Vec u = approx_hat[i];
        if (u.size() != approx[i].size()) throw Error(ErrorCode::DimensionMismatch, "vector length mismatch");
        if (!noise.empty())
            for (std::size_t k = 0; k < u.size(); ++k) u[k] += noise[i][k];
        mse += detail::squared_error(approx[i], u);
        angle += spectral_angle(approx[i], u);
    }
    const double B = static_cast<double>(approx.size());
    return mse / B + angle / B;
}

/// Mean spectral angle between detail vectors. Pairs where either vector has
/// norm below 1e-12 contribute 0 and are counted in `guarded`.
inline double loss_l5d(std::span<const Vec> detail, std::span<const Vec> detail_hat,
                       std::size_t* guarded = nullptr) {
    detail::check_batch(detail.size(), detail_hat.size());
    double angle = 0.0;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < detail.size(); ++i) {
        if (detail[i].size() != detail_hat[i].size())
            throw Error(ErrorCode::DimensionMismatch, "vector length mismatch");
        if (norm2(detail[i]) < kDetailNormFloor || norm2(detail_hat[i]) < kDetailNormFloor) {
            ++skipped;
            continue;
        }
        angle += spectral_angle(detail[i], detail_hat[i]);
    }
    if (guarded) *guarded = skipped;
    return angle / static_cast<double>(detail.size());
}

/// Same form as loss_l5a without the noise prior.
inline double loss_l9(std::span<const Vec> approx, std::span<const Vec> approx_tilde) {
    return loss_l5a(approx, approx_tilde);
}

inline double l2_regularizer(const Matrix& w) { return norm2(w.flat()); }

inline double l1_regularizer(const Matrix& w) {
    double s = 0.0;
    for (double v : w.flat()) s += std::abs(v);
    return s;
}

// ---------------------------------------------------------------------------
// Forward pass

struct ForwardResult {
    Vec abundances;   // alpha, on the simplex
    Vec approx_hat;   // x_hat_a (l5a)
    Vec detail_hat;   // x_hat_d (l5d)
    Vec approx_tilde; // x_tilde_a (l9)
    std::array<DenseCache, kLayerCount> caches;
};

inline Vec concat_pair(const WaveletPair& pair) {
    Vec z;
    z.reserve(2 * pair.size());
    z.insert(z.end(), pair.approx.begin(), pair.approx.end());
    z.insert(z.end(), pair.detail.begin(), pair.detail.end());
    return z;
}

inline ForwardResult forward_pass(const SwanModel& model, const WaveletPair& pair, bool training,
                                  RngStream& rng) {
    const std::size_t K = model.arch.coefficients;
    if (pair.approx.size() != K || pair.detail.size() != K)
        throw Error(ErrorCode::DimensionMismatch, "model expects K=" + std::to_string(K) +
                                                      " coefficients per half, got " +
                                                      std::to_string(pair.approx.size()));
    ForwardResult r;
    auto& c = r.caches;
    const Vec z = concat_pair(pair);
    Vec h = dense_forward(model[L1], z, training, rng, &c[L1]);
    h = dense_forward(model[L2], h, training, rng, &c[L2]);
    h = dense_forward(model[L3], h, training, rng, &c[L3]);
    r.abundances = dense_forward(model[L4], h, training, rng, &c[L4]);
    r.approx_hat = dense_forward(model[L5A], r.abundances, training, rng, &c[L5A]);
    r.detail_hat = dense_forward(model[L5D], r.abundances, training, rng, &c[L5D]);
    Vec g = dense_forward(model[L6], r.approx_hat, training, rng, &c[L6]);
    g = dense_forward(model[L7], g, training, rng, &c[L7]);
    g = dense_forward(model[L8], g, training, rng, &c[L8]);
    r.approx_tilde = dense_forward(model[L9], g, training, rng, &c[L9]);
    return r;
}

// ---------------------------------------------------------------------------
// Full objective with gradients

namespace detail {

struct SampleLoss {
    double l5a = 0.0, l5d = 0.0, l9 = 0.0;
    bool guarded = false;
};

// Per-sample loss terms (unscaled by 1/B). When `grads` is set, accumulates
// d(term)/d(params) * inv_batch into it.
inline SampleLoss sample_loss(const SwanModel& model, const WaveletPair& pair, const RngStream& sample_rng,
                              bool training, double noise_sigma, double inv_batch, ModelGradients* grads) {
    RngStream dropout_rng = sample_rng.substream(0);
    ForwardResult f = forward_pass(model, pair, training, dropout_rng);
    const std::size_t K = model.arch.coefficients;

    Vec u = f.approx_hat;
    if (noise_sigma > 0.0) {
        RngStream noise_rng = sample_rng.substream(1);
        for (std::size_t k = 0; k < K; ++k) u[k] += noise_rng.normal(0.0, noise_sigma);
    }

    const bool want = grads != nullptr;
    SampleLoss s;
    auto a5 = angle_and_grad(pair.approx, u, want);
    s.l5a = squared_error(pair.approx, u) + a5.value;

    AngleWithGrad a5d;
    if (norm2(pair.detail) < kDetailNormFloor || norm2(f.detail_hat) < kDetailNormFloor) {
        s.guarded = true;
        if (want) a5d.grad.assign(K, 0.0);
    } else {
        a5d = angle_and_grad(pair.detail, f.detail_hat, want);
        s.l5d = a5d.value;
    }

    auto a9 = angle_and_grad(pair.approx, f.approx_tilde, want);
    s.l9 = squared_error(pair.approx, f.approx_tilde) + a9.value;

    if (!want) return s;

    auto& c = f.caches;
    auto& g = *grads;
    const auto back = [&](LayerSlot slot, const Vec& upstream) {
        return dense_backward_accumulate(model[slot], c[slot], upstream, g.weights[slot], g.bias[slot]);
    };

    Vec d_tilde(K), d_hat_a(K), d_hat_d(K);
    for (std::size_t k = 0; k < K; ++k) {
        d_tilde[k] = inv_batch * (-2.0 * (pair.approx[k] - f.approx_tilde[k]) + a9.grad[k]);
        d_hat_a[k] = inv_batch * (-2.0 * (pair.approx[k] - u[k]) + a5.grad[k]);
        d_hat_d[k] = inv_batch * a5d.grad[k];
    }

    Vec up = back(L9, d_tilde);
    up = back(L8, up);
    up = back(L7, up);
    up = back(L6, up);
    for (std::size_t k = 0; k < K; ++k) d_hat_a[k] += up[k];

    Vec d_alpha = back(L5A, d_hat_a);
    const Vec d_alpha_d = back(L5D, d_hat_d);
    for (std::size_t j = 0; j < d_alpha.size(); ++j) d_alpha[j] += d_alpha_d[j];

    up = back(L4, d_alpha);
    up = back(L3, up);
    up = back(L2, up);
    back(L1, up);
    return s;
}

// Fixed-size chunks keep the summation order independent of thread count.
inline constexpr std::size_t kChunk = 8;

} // namespace detail

/// Evaluates the full objective on a batch. `batch_rng` seeds per-sample
/// dropout masks and noise draws (sample i uses batch_rng.substream(i)).
/// When `grads` is non-null it is overwritten with the batch gradient.
inline LossBreakdown total_loss(const SwanModel& model, std::span<const WaveletPair* const> batch,
                                const TrainConfig& config, const RngStream& batch_rng, bool training,
                                ModelGradients* grads = nullptr) {
    if (batch.empty()) throw Error(ErrorCode::DimensionMismatch, "empty batch");
    const std::size_t n = batch.size();
    const double inv_batch = 1.0 / static_cast<double>(n);
    const std::size_t chunks = (n + detail::kChunk - 1) / detail::kChunk;

    std::vector<detail::SampleLoss> losses(n);
    std::vector<ModelGradients> chunk_grads;
    if (grads) chunk_grads.assign(chunks, ModelGradients(model));

    auto run_chunk = [&](std::size_t ch) {
        const std::size_t lo = ch * detail::kChunk;
        const std::size_t hi = std::min(n, lo + detail::kChunk);
        for (std::size_t i = lo; i < hi; ++i)
            losses[i] = detail::sample_loss(model, *batch[i], batch_rng.substream(i), training,
                                            config.noise_sigma, inv_batch, grads ? &chunk_grads[ch] : nullptr);
    };

    const std::size_t workers = std::min(std::max<std::size_t>(config.threads, 1), chunks);
    if (workers <= 1) {
        for (std::size_t ch = 0; ch < chunks; ++ch) run_chunk(ch);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t ch = w; ch < chunks; ch += workers) run_chunk(ch);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    LossBreakdown out;
    for (const auto& s : losses) {
        out.l5a_term += s.l5a;
        out.l5d_term += s.l5d;
        out.l9_term += s.l9;
        out.guarded_detail += s.guarded ? 1 : 0;
    }
    out.l5a_term *= inv_batch;
    out.l5d_term *= inv_batch;
    out.l9_term *= inv_batch;
    out.l2_reg = l2_regularizer(model[L5A].weights);
    out.l1_reg = l1_regularizer(model[L5D].weights);
    out.total = out.l5a_term + out.l5d_term + out.l9_term + config.lambda1 * out.l2_reg +
                config.lambda2 * out.l1_reg;

    if (grads) {
        grads->weights = chunk_grads[0].weights;
        grads->bias = chunk_grads[0].bias;
        for (std::size_t ch = 1; ch < chunks; ++ch) grads->add(chunk_grads[ch]);
        if (out.l2_reg > 0.0) {
            auto g = grads->weights[L5A].flat();
            auto w = model[L5A].weights.flat();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += config.lambda1 * w[k] / out.l2_reg;
        }
        auto g = grads->weights[L5D].flat();
        auto w = model[L5D].weights.flat();
        for (std::size_t k = 0; k < g.size(); ++k)
            g[k] += config.lambda2 * (w[k] > 0.0 ? 1.0 : (w[k] < 0.0 ? -1.0 : 0.0));
    }
    return out;
}

inline LossBreakdown total_loss(const SwanModel& model, std::span<const WaveletPair> batch,
                                const TrainConfig& config, const RngStream& batch_rng, bool training,
                                ModelGradients* grads = nullptr) {
    std::vector<const WaveletPair*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& p : batch) ptrs.push_back(&p);
    return total_loss(model, std::span<const WaveletPair* const>(ptrs), config, batch_rng, training, grads);
}

// ---------------------------------------------------------------------------
// Input normalisation

struct NormalizedCube {
    WaveletCube cube;
    Vec scales; // per-pixel max |coefficient| that was divided out
};

/// Divides each pixel's concatenated (x_a, x_d) by its largest magnitude.
inline NormalizedCube normalize_pixelwise(const WaveletCube& wcube) {
    NormalizedCube out{wcube, Vec(wcube.pixel_count())};
    for (std::size_t p = 0; p < out.cube.pairs.size(); ++p) {
        auto& pair = out.cube.pairs[p];
        double peak = 0.0;
        for (double v : pair.approx) peak = std::max(peak, std::abs(v));
        for (double v : pair.detail) peak = std::max(peak, std::abs(v));
        if (peak == 0.0) throw Error(ErrorCode::AllZeroPixel, "pixel " + std::to_string(p) + " is all zero");
        for (double& v : pair.approx) v /= peak;
        for (double& v : pair.detail) v /= peak;
        out.scales[p] = peak;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    LossBreakdown train;
    LossBreakdown heldout;
    bool has_heldout = false;
};

struct TrainResult {
    std::vector<EpochRecord> trace;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> heldout_indices;
};

/// Seeded uniform split of pixel indices into train and held-out sets.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_pixels(std::size_t pixels, double train_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(pixels);
    std::iota(idx.begin(), idx.end(), 0);
    RngStream rng(seed, 0x5b1f);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(pixels)));
    n_train = std::clamp<std::size_t>(n_train, 1, pixels);
    if (pixels >= 2 && n_train == pixels) n_train = pixels - 1;
    std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> held(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return {train, held};
}

/// Sets the decoder weight columns to the coefficients of e distinct pixels
/// drawn from `candidates`. Starting every column on the data keeps the
/// softmax from collapsing onto a single column in the first epoch.
inline void seed_decoder_from_pixels(SwanModel& model, const WaveletCube& normalized,
                                     std::span<const std::size_t> candidates, std::uint64_t seed) {
    const std::size_t e = model.arch.endmembers;
    const std::size_t K = model.arch.coefficients;
    if (normalized.coefficients() != K)
        throw Error(ErrorCode::DimensionMismatch, "cube K does not match the model");
    if (candidates.size() < e) throw Error(ErrorCode::InvalidDims, "fewer candidate pixels than endmembers");
    std::vector<std::size_t> pool(candidates.begin(), candidates.end());
    RngStream rng(seed, 0xdec0de);
    for (std::size_t j = 0; j < e; ++j) {
        const std::size_t pick = j + rng.index(pool.size() - j);
        std::swap(pool[j], pool[pick]);
        const auto& pair = normalized.pairs[pool[j]];
        model[L5A].weights.set_col(j, pair.approx);
        model[L5D].weights.set_col(j, pair.detail);
    }
}

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline void accumulate(LossBreakdown& acc, const LossBreakdown& b, double w) {
    acc.l5a_term += w * b.l5a_term;
    acc.l5d_term += w * b.l5d_term;
    acc.l9_term += w * b.l9_term;
    acc.l2_reg += w * b.l2_reg;
    acc.l1_reg += w * b.l1_reg;
    acc.total += w * b.total;
    acc.guarded_detail += b.guarded_detail;
}

inline LossBreakdown evaluate_set(const SwanModel& model, const WaveletCube& cube,
                                  std::span<const std::size_t> indices, const TrainConfig& config,
                                  const RngStream& rng) {
    LossBreakdown acc;
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (std::size_t start = 0, b = 0; start < indices.size(); start += config.batch_size, ++b) {
        const std::size_t end = std::min(indices.size(), start + config.batch_size);
        std::vector<const WaveletPair*> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(&cube.pairs[indices[i]]);
        const auto loss = total_loss(model, batch, config, rng.substream(b), false);
        accumulate(acc, loss, static_cast<double>(end - start) * inv);
    }
    return acc;
}

} // namespace detail

/// Self-supervised training with Adam on shuffled mini-batches of the
/// training split. The held-out split is evaluated (dropout off) for
/// reporting only. Deterministic in (cube, config, initial model).
inline TrainResult train(SwanModel& model, const WaveletCube& normalized, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
    config.validate();
    if (normalized.coefficients() != model.arch.coefficients)
        throw Error(ErrorCode::DimensionMismatch,
                    "cube has K=" + std::to_string(normalized.coefficients()) + " but model expects K=" +
                        std::to_string(model.arch.coefficients));
    if (normalized.pixel_count() == 0) throw Error(ErrorCode::InvalidDims, "empty cube");

    TrainResult result;
    std::tie(result.train_indices, result.heldout_indices) =
        split_pixels(normalized.pixel_count(), config.train_fraction, config.seed);

    AdamState adam;
    adam.learning_rate = config.learning_rate;
    ModelGradients grads(model);
    const RngStream root(config.seed, 0x7a11);

    std::vector<std::size_t> order = result.train_indices;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        RngStream shuffle_rng = root.substream(epoch, 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        EpochRecord rec;
        rec.epoch = epoch;
        const double inv = 1.0 / static_cast<double>(order.size());
        for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<const WaveletPair*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&normalized.pairs[order[i]]);

            LossBreakdown loss;
            try {
                loss = total_loss(model, batch, config, root.substream(epoch, 1, b), true, &grads);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::ZeroNormVector) throw;
                throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " +
                                                          std::to_string(b) + ": " + err.what());
            }
            if (!std::isfinite(loss.total))
                throw Error(ErrorCode::NonFiniteLoss,
                            "epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
            detail::accumulate(rec.train, loss, static_cast<double>(end - start) * inv);

            auto params = model.parameter_blocks();
            auto gblocks = grads.blocks(model);
            try {
                adam_step(params, gblocks, adam);
            } catch (const Error& err) {
                throw Error(ErrorCode::NonFiniteGradient, "epoch " + std::to_string(epoch) + " batch " +
                                                              std::to_string(b) + ": " + err.what());
            }
        }
        if (!result.heldout_indices.empty()) {
            rec.heldout = detail::evaluate_set(model, normalized, result.heldout_indices, config,
                                               root.substream(epoch, 2));
            rec.has_heldout = true;
        }
        if (rec.train.guarded_detail > 0)
            log("epoch " + std::to_string(epoch) + ": " + std::to_string(rec.train.guarded_detail) +
                " zero-norm detail angles skipped");
        result.trace.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

/// Tab-separated loss log line: epoch l5a l5d l9 l2_reg l1_reg total heldout_total
inline std::string loss_log_header() {
    return "epoch\tl5a\tl5d\tl9\tl2_reg\tl1_reg\ttotal\theldout_total\n";
}

} // namespace swan
