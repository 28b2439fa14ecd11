// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Adversarial domain synthesizer: a shallow conv net whose blocks are
// restyled by random AdaIN statistics, mixed back into the source image.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advsdg/nn.hpp"
#include "advsdg/random.hpp"
#include "advsdg/tensor.hpp"

namespace advsdg::synth {

/// Per-block, per-channel AdaIN style statistics (the noise input z).
struct StyleNoise {
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> stddev;

    [[nodiscard]] std::vector<int> channel_counts() const;
    friend bool operator==(const StyleNoise&, const StyleNoise&) = default;
};

/// mean ~ N(0, 1); stddev = softplus(N(0, 1)) + 0.1.
[[nodiscard]] StyleNoise sample_style(Rng& rng, std::span<const int> channel_counts);

/// Blend weight between synthesized texture and source image, in [0, 1].
class MixRatio {
public:
    explicit MixRatio(double alpha);
    [[nodiscard]] double value() const noexcept { return alpha_; }

private:
    double alpha_;
};

struct SynthesizerOptions {
    int image_channels = 1;
    int hidden_channels = 2;
    int blocks = 4;
    double leaky_slope = 0.2;
    /// Disabled for the GIN baseline, which has no style injection.
    bool use_adain = true;
    /// Rescale the raw output to the input's per-sample mean/std before mixing.
    bool restyle_output = true;
};

template <typename T>
class Synthesizer {
public:
    struct Cache {
        std::vector<Tensor<T>> block_inputs;
        std::vector<Tensor<T>> pre_activations;
        std::vector<nn::AdainCache<T>> adain;
        std::vector<std::vector<T>> style_std;
        Tensor<T> proj_input;
        Tensor<T> raw_normalized;
        std::vector<T> raw_sigma, raw_denom;
        std::vector<T> image_mean, image_sigma;
        Tensor<T> image;
        std::vector<T> alpha;
    };

    Synthesizer() = default;
    /// Kaiming-initialized parameters, used as the starting point of adversarial training.
    Synthesizer(const SynthesizerOptions& options, Rng& init_rng);

    /// Fresh random parameters meant to be used without adversarial updates
    /// (GIN baseline and the no-adversarial ablation).
    [[nodiscard]] static Synthesizer random_init(const SynthesizerOptions& options, std::uint64_t seed);

    /// `alpha` holds one shared ratio or one per batch element.
    [[nodiscard]] Tensor<T> forward(const Tensor<T>& image, const StyleNoise& noise,
                                    std::span<const MixRatio> alpha, Cache* cache = nullptr) const;

    /// Accumulates parameter gradients; returns dL/dimage when requested.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& dout, bool need_input_grad);

    [[nodiscard]] nn::ParameterList<T> parameters();
    [[nodiscard]] std::uint64_t parameter_hash() const;
    [[nodiscard]] std::vector<int> style_channels() const;
    [[nodiscard]] const SynthesizerOptions& options() const noexcept { return options_; }

private:
    SynthesizerOptions options_;
    std::vector<nn::Conv2d<T>> blocks_;
    nn::Conv2d<T> projection_;
};

/// Functional form: X_hat = T(X, z; params) with a single shared mix ratio.
template <typename T>
[[nodiscard]] Tensor<T> synthesize(const Tensor<T>& image, const StyleNoise& noise, MixRatio alpha,
                                   const Synthesizer<T>& params) {
    const MixRatio a[] = {alpha};
    return params.forward(image, noise, a);
}

}  // namespace advsdg::synth
