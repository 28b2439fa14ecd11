// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Layer primitives with explicit forward/backward passes. Layers hold their
// parameters; callers hold activations and pass them back into backward(),
// so one layer can be applied to several inputs within a single step.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advsdg/random.hpp"
#include "advsdg/tensor.hpp"

namespace advsdg::nn {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string param_name, int n, int c, int h, int w)
        : name(std::move(param_name)), value(n, c, h, w), grad(n, c, h, w) {}
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
void zero_grad(const ParameterList<T>& params);

template <typename T>
double grad_norm(const ParameterList<T>& params);

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const ParameterList<T>& params, double max_norm);

template <typename T>
bool grads_finite(const ParameterList<T>& params);

/// FNV-1a over every parameter value, in list order.
template <typename T>
std::uint64_t parameter_hash(const ParameterList<T>& params);

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1,
           int pad = -1);

    /// He-normal weights for a LeakyReLU with the given slope, zero bias.
    void init_kaiming(Rng& rng, double negative_slope);

    [[nodiscard]] Tensor<T> forward(const Tensor<T>& x) const;

    /// Gradient w.r.t. the input `x` that was given to forward(). Weight and
    /// bias gradients are added into `grad` when `accumulate` is set.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx, bool accumulate);

    [[nodiscard]] int in_channels() const noexcept { return in_; }
    [[nodiscard]] int out_channels() const noexcept { return out_; }
    [[nodiscard]] int kernel() const noexcept { return k_; }
    [[nodiscard]] int stride() const noexcept { return stride_; }
    [[nodiscard]] int pad() const noexcept { return pad_; }
    [[nodiscard]] int output_extent(int in) const noexcept { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Parameter<T> weight;  // [out, in, k, k]
    Parameter<T> bias;    // [1, out, 1, 1]

private:
    int in_ = 0, out_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    [[nodiscard]] bool use_direct(int width) const noexcept;
};

template <typename T>
[[nodiscard]] Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
[[nodiscard]] Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope);

/// Per-(sample, channel) spatial statistics, population variance.
template <typename T>
struct ChannelStats {
    std::vector<T> mean;
    std::vector<T> stddev;
};

template <typename T>
[[nodiscard]] ChannelStats<T> channel_stats(const Tensor<T>& x);

/// Instance normalization with learned per-channel affine.
template <typename T>
class InstanceNorm {
public:
    struct Cache {
        Tensor<T> normalized;
        std::vector<T> inv_std;
    };

    InstanceNorm() = default;
    InstanceNorm(const std::string& name, int channels, T eps = T(1e-5));

    [[nodiscard]] Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
    Tensor<T> backward(const Cache& cache, const Tensor<T>& dy, bool accumulate);

    Parameter<T> gamma;
    Parameter<T> beta;

private:
    T eps_ = T(1e-5);
};

/// AdaIN: out[n,c] = style_std[c] * (x[n,c] - mu) / (sigma + eps) + style_mean[c].
template <typename T>
struct AdainCache {
    Tensor<T> normalized;
    std::vector<T> sigma;
    std::vector<T> denom;
};

template <typename T>
[[nodiscard]] Tensor<T> adain(const Tensor<T>& x, std::span<const T> style_mean,
                              std::span<const T> style_std, AdainCache<T>* cache, T eps = T(1e-5));
template <typename T>
[[nodiscard]] Tensor<T> adain_backward(const AdainCache<T>& cache, std::span<const T> style_std,
                                       const Tensor<T>& dy);

template <typename T>
[[nodiscard]] Tensor<T> max_pool2x2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax);
template <typename T>
[[nodiscard]] Tensor<T> max_pool2x2_backward(const Tensor<T>& dy,
                                             const std::vector<std::uint32_t>& argmax,
                                             const std::array<int, 4>& input_shape);

template <typename T>
[[nodiscard]] Tensor<T> upsample2x(const Tensor<T>& x);
template <typename T>
[[nodiscard]] Tensor<T> upsample2x_backward(const Tensor<T>& dy);

template <typename T>
[[nodiscard]] Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Splits a gradient of concat_channels(a, b) back into its two halves.
template <typename T>
void split_channels(const Tensor<T>& d, int channels_a, Tensor<T>& da, Tensor<T>& db);

template <typename T>
[[nodiscard]] Tensor<T> softmax_channels(const Tensor<T>& logits);
template <typename T>
[[nodiscard]] Tensor<T> softmax_channels_backward(const Tensor<T>& probs, const Tensor<T>& dprobs);

struct AdamOptions {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam moment state for one parameter group. Parameters are passed to step()
/// rather than stored, so owning objects stay freely copyable.
template <typename T>
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamOptions options) : options_(options) {}

    void step(const ParameterList<T>& params, double lr);
    [[nodiscard]] std::int64_t steps_taken() const noexcept { return t_; }

private:
    AdamOptions options_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace advsdg::nn
