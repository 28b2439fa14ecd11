// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "advsdg/tensor.hpp"

namespace advsdg::loss {

inline constexpr double kLogEps = 1e-8;

/// Scalar loss with gradients w.r.t. its (up to two) prediction arguments.
template <typename T>
struct LossGrad {
    double value = 0.0;
    Tensor<T> d_first;
    Tensor<T> d_second;
};

/// Mean over pixels of sum_k p log((p + eps) / (q + eps)).
template <typename T>
[[nodiscard]] double kl_divergence(const SoftPrediction<T>& p, const SoftPrediction<T>& q);
template <typename T>
[[nodiscard]] LossGrad<T> kl_divergence_grad(const SoftPrediction<T>& p, const SoftPrediction<T>& q);

/// KL(S(x1) || S(x2)), in that direction only.
template <typename T>
[[nodiscard]] double consistency_loss(const SoftPrediction<T>& pred1, const SoftPrediction<T>& pred2) {
    return kl_divergence(pred1, pred2);
}

struct SupervisedOptions {
    /// Adds 1 - mean soft Dice over foreground classes.
    bool soft_dice = false;
};

/// Pixel-averaged cross-entropy -log(pred[y] + eps), i.e. KL(onehot(y) || pred)
/// without its zero entropy term.
template <typename T>
[[nodiscard]] double supervised_loss(const SoftPrediction<T>& pred, const LabelMask& y,
                                     SupervisedOptions options = {});
template <typename T>
[[nodiscard]] LossGrad<T> supervised_loss_grad(const SoftPrediction<T>& pred, const LabelMask& y,
                                               SupervisedOptions options = {});

/// One row of training metrics. The two totals are derived, never stored.
struct LossReport {
    double sup_1 = 0.0;
    double sup_2 = 0.0;
    double cons = 0.0;
    double mi_1 = 0.0;
    double mi_2 = 0.0;
    bool skipped = false;

    [[nodiscard]] double seg_total() const noexcept { return sup_1 + sup_2 + cons; }
    [[nodiscard]] double adv_total() const noexcept { return cons + mi_1 + mi_2; }
    [[nodiscard]] bool finite() const noexcept;

    friend bool operator==(const LossReport&, const LossReport&) = default;
};

}  // namespace advsdg::loss
