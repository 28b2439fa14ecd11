// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Patch-level contrastive surrogate for the mutual information between a
// source image and its synthesized counterpart.

#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "advsdg/nn.hpp"
#include "advsdg/random.hpp"
#include "advsdg/tensor.hpp"

namespace advsdg::mi {

/// Distinct (y, x) cells of the encoder's output feature map.
struct PatchLocations {
    int feature_h = 0;
    int feature_w = 0;
    std::vector<std::pair<int, int>> cells;

    [[nodiscard]] int count() const noexcept { return static_cast<int>(cells.size()); }
    friend bool operator==(const PatchLocations&, const PatchLocations&) = default;
};

/// Uniformly samples `count` distinct cells. Throws ValueError when count exceeds the area.
[[nodiscard]] PatchLocations sample_patch_locations(int feature_h, int feature_w, int count, Rng& rng);

enum class NegativeForm {
    /// Negatives compare the synthesized query with source patches: f_hat_p . f_n.
    kQueryVsSource,
    /// Negatives compare source patches with each other: f_p . f_n (n != p).
    kSourceVsSource,
};

struct ContrastiveResult {
    double loss = 0.0;  // mean over patches of the log-softmax of the positive pair, <= 0
    Matrix<double> d_source;
    Matrix<double> d_synth;
};

/// Value of the patch contrastive objective. Rows must be L2-normalized (|norm - 1| <= 1e-3).
template <typename T>
[[nodiscard]] double contrastive_mi_loss(const Matrix<T>& f_src, const Matrix<T>& f_syn, double tau,
                                         NegativeForm form = NegativeForm::kQueryVsSource);

/// Value plus gradients w.r.t. both feature matrices.
template <typename T>
[[nodiscard]] ContrastiveResult contrastive_mi_loss_grad(
    const Matrix<T>& f_src, const Matrix<T>& f_syn, double tau,
    NegativeForm form = NegativeForm::kQueryVsSource);

struct PatchEncoderOptions {
    int image_channels = 1;
    std::array<int, 3> widths = {16, 32, 64};
    int embed_dim = 128;
    double leaky_slope = 0.2;
};

/// Feature extractor F: three stride-2 conv blocks followed by a fully
/// connected head evaluated at each sampled location, L2-normalized.
template <typename T>
class PatchEncoder {
public:
    struct Cache {
        std::array<Tensor<T>, 3> block_inputs;
        std::array<Tensor<T>, 3> pre_activations;
        Tensor<T> features;
        PatchLocations locations;
        std::vector<Matrix<T>> gathered;    // per sample [P, C]
        std::vector<Matrix<T>> embeddings;  // per sample [P, D], before normalization
        std::vector<std::vector<T>> norms;
    };

    PatchEncoder() = default;
    PatchEncoder(const PatchEncoderOptions& options, Rng& init_rng);

    /// Feature-map extent produced for an input of the given extent.
    [[nodiscard]] std::pair<int, int> feature_extent(int h, int w) const;

    /// One [P, D] matrix per batch element.
    [[nodiscard]] std::vector<Matrix<T>> forward(const Tensor<T>& image, const PatchLocations& locations,
                                                 Cache* cache = nullptr) const;

    /// Accumulates parameter gradients; returns dL/dimage when requested.
    Tensor<T> backward(const Cache& cache, const std::vector<Matrix<T>>& d_features,
                       bool need_input_grad, bool accumulate = true);

    /// Dense similarity map: query embedding at `query` against every cell of `other`.
    [[nodiscard]] Grid<T> similarity_map(const Tensor<T>& query_image, std::pair<int, int> query,
                                         const Tensor<T>& other_image) const;

    [[nodiscard]] nn::ParameterList<T> parameters();
    [[nodiscard]] std::uint64_t parameter_hash() const;
    [[nodiscard]] const PatchEncoderOptions& options() const noexcept { return options_; }

private:
    [[nodiscard]] Tensor<T> encode(const Tensor<T>& image, Cache* cache) const;

    PatchEncoderOptions options_;
    std::array<nn::Conv2d<T>, 3> convs_;
    nn::Parameter<T> head_weight_;  // [D, C, 1, 1]
    nn::Parameter<T> head_bias_;    // [1, D, 1, 1]
};

/// Functional form of F(X_p; theta4) for one batch element.
template <typename T>
[[nodiscard]] Matrix<T> extract_patch_features(const Tensor<T>& image, const PatchLocations& locations,
                                               const PatchEncoder<T>& params) {
    return params.forward(image, locations).front();
}

}  // namespace advsdg::mi
