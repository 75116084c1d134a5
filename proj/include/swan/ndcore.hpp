#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "swan/error.hpp"
#include "swan/matrix.hpp"
#include "swan/rng.hpp"

namespace swan {

enum class Activation { Identity, Sigmoid, ReLU, Softmax };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::ReLU: return "relu";
    case Activation::Softmax: return "softmax";
    }
    return "?";
}

/// Fully connected layer: output = dropout(act(W x + b)).
struct DenseLayer {
    Matrix weights; // out_dim x in_dim
    Vec bias;       // out_dim, empty when has_bias is false
    Activation activation = Activation::Identity;
    double dropout_rate = 0.0;
    bool has_bias = true;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act, double dropout = 0.0,
               bool with_bias = true)
        : weights(out_dim, in_dim), bias(with_bias ? out_dim : 0, 0.0), activation(act),
          dropout_rate(dropout), has_bias(with_bias) {
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw Error(ErrorCode::InvalidConfig, "dropout rate must lie in [0, 1)");
    }

    std::size_t in_dim() const noexcept { return weights.cols(); }
    std::size_t out_dim() const noexcept { return weights.rows(); }
    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

    bool finite() const {
        const auto ok = [](double v) { return std::isfinite(v); };
        return std::all_of(weights.flat().begin(), weights.flat().end(), ok) &&
               std::all_of(bias.begin(), bias.end(), ok);
    }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Uniform Glorot initialisation of the weights; biases are zeroed.
inline void glorot_uniform(DenseLayer& layer, RngStream& rng) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (double& w : layer.weights.flat()) w = rng.uniform(-limit, limit);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

struct DenseCache {
    Vec input;
    Vec pre;    // W x + b
    Vec active; // act(pre)
    Vec mask;   // inverted-dropout scale per unit; empty when no dropout was applied
    Vec output;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double ez = std::exp(z);
    return ez / (1.0 + ez);
}

inline Vec softmax(std::span<const double> z) {
    Vec out(z.size());
    if (z.empty()) return out;
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - peak);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

/// (diag(s) - s s^T) * upstream, the softmax Jacobian-vector product.
inline Vec softmax_jacobian_apply(std::span<const double> s, std::span<const double> upstream) {
    const double inner = dot(s, upstream);
    Vec out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * (upstream[i] - inner);
    return out;
}

inline Vec dense_forward(const DenseLayer& layer, std::span<const double> input, bool training,
                         RngStream& rng, DenseCache* cache = nullptr) {
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    if (input.size() != in)
        throw Error(ErrorCode::DimensionMismatch, "layer expects " + std::to_string(in) +
                                                      " inputs, got " + std::to_string(input.size()));

    Vec pre(out);
    for (std::size_t r = 0; r < out; ++r) {
        const double* w = layer.weights.data() + r * in;
        double acc = layer.has_bias ? layer.bias[r] : 0.0;
        for (std::size_t c = 0; c < in; ++c) acc += w[c] * input[c];
        pre[r] = acc;
    }

    Vec active;
    switch (layer.activation) {
    case Activation::Identity: active = pre; break;
    case Activation::Sigmoid:
        active.resize(out);
        for (std::size_t i = 0; i < out; ++i) active[i] = sigmoid(pre[i]);
        break;
    case Activation::ReLU:
        active.resize(out);
        for (std::size_t i = 0; i < out; ++i) active[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        break;
    case Activation::Softmax: active = softmax(pre); break;
    }

    Vec result = active;
    Vec mask;
    if (training && layer.dropout_rate > 0.0) {
        const double keep = 1.0 - layer.dropout_rate;
        mask.resize(out);
        for (std::size_t i = 0; i < out; ++i) {
            mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
            result[i] *= mask[i];
        }
    }

    if (cache) {
        cache->input.assign(input.begin(), input.end());
        cache->pre = std::move(pre);
        cache->active = std::move(active);
        cache->mask = std::move(mask);
        cache->output = result;
    }
    return result;
}

struct DenseGradients {
    Vec input;
    Matrix weights;
    Vec bias;
};

/// Accumulates parameter gradients into `weight_grad`/`bias_grad` and
/// returns the gradient with respect to the layer input.
inline Vec dense_backward_accumulate(const DenseLayer& layer, const DenseCache& cache,
                                     std::span<const double> upstream, Matrix& weight_grad,
                                     std::span<double> bias_grad) {
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    if (cache.input.size() != in || cache.pre.size() != out || upstream.size() != out ||
        (!cache.mask.empty() && cache.mask.size() != out))
        throw Error(ErrorCode::StaleCache, "cache or upstream gradient does not match layer shape");

    Vec delta(upstream.begin(), upstream.end());
    if (!cache.mask.empty())
        for (std::size_t i = 0; i < out; ++i) delta[i] *= cache.mask[i];

    switch (layer.activation) {
    case Activation::Identity: break;
    case Activation::Sigmoid:
        for (std::size_t i = 0; i < out; ++i) {
            const double s = cache.active[i];
            delta[i] *= s * (1.0 - s);
        }
        break;
    case Activation::ReLU:
        for (std::size_t i = 0; i < out; ++i)
            if (cache.pre[i] <= 0.0) delta[i] = 0.0;
        break;
    case Activation::Softmax: delta = softmax_jacobian_apply(cache.active, delta); break;
    }

    Vec input_grad(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
        const double g = delta[r];
        if (g == 0.0) continue;
        const double* w = layer.weights.data() + r * in;
        double* gw = weight_grad.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) {
            gw[c] += g * cache.input[c];
            input_grad[c] += g * w[c];
        }
        if (layer.has_bias) bias_grad[r] += g;
    }
    return input_grad;
}

inline DenseGradients dense_backward(const DenseLayer& layer, const DenseCache& cache,
                                     std::span<const double> upstream) {
    DenseGradients g{{}, Matrix(layer.out_dim(), layer.in_dim()), Vec(layer.bias.size(), 0.0)};
    g.input = dense_backward_accumulate(layer, cache, upstream, g.weights, g.bias);
    return g;
}

/// Bias-corrected Adam over a list of parameter blocks.
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step_count = 0;
    std::vector<Vec> first_moment;
    std::vector<Vec> second_moment;
};

inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads, AdamState& state) {
    if (params.size() != grads.size())
        throw Error(ErrorCode::DimensionMismatch, "parameter and gradient block counts differ");
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size())
            throw Error(ErrorCode::DimensionMismatch, "block " + std::to_string(b) + " shape mismatch");
        for (double g : grads[b])
            if (!std::isfinite(g))
                throw Error(ErrorCode::NonFiniteGradient,
                            "non-finite gradient in block " + std::to_string(b) + " at step " +
                                std::to_string(state.step_count + 1));
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    } else if (state.first_moment.size() != params.size()) {
        throw Error(ErrorCode::DimensionMismatch, "optimizer state does not match parameter blocks");
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        Vec& m = state.first_moment[b];
        Vec& v = state.second_moment[b];
        auto p = params[b];
        auto g = grads[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
        for (double x : p)
            if (!std::isfinite(x))
                throw Error(ErrorCode::NonFiniteGradient, "parameter became non-finite after update");
    }
}

} // namespace swan
