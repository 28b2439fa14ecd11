// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/losses.hpp"

#include <cmath>
#include <string>

namespace advsdg::loss {

namespace {

template <typename T>
void check_pair(const SoftPrediction<T>& p, const SoftPrediction<T>& q) {
    if (!p.probs.same_shape(q.probs)) {
        throw ShapeError("kl_divergence: " + shape_string(p.probs.shape()) + " vs " +
                         shape_string(q.probs.shape()));
    }
}

template <typename T>
void check_labels(const SoftPrediction<T>& pred, const LabelMask& y) {
    const auto& t = pred.probs;
    if (y.n != t.n() || y.h != t.h() || y.w != t.w()) {
        throw ShapeError("supervised_loss: mask shape does not match prediction");
    }
    for (auto v : y.labels) {
        if (v < 0 || v >= t.c()) {
            throw ValueError("supervised_loss: label " + std::to_string(v) + " outside [0, " +
                             std::to_string(t.c() - 1) + "]");
        }
    }
}

template <typename T>
double pixel_count(const Tensor<T>& t) {
    return static_cast<double>(t.n()) * static_cast<double>(t.plane_size());
}

}  // namespace

bool LossReport::finite() const noexcept {
    return std::isfinite(sup_1) && std::isfinite(sup_2) && std::isfinite(cons) && std::isfinite(mi_1) &&
           std::isfinite(mi_2);
}

template <typename T>
double kl_divergence(const SoftPrediction<T>& p, const SoftPrediction<T>& q) {
    check_pair(p, q);
    double sum = 0.0;
    const auto& a = p.probs;
    const auto& b = q.probs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double pi = a[i];
        sum += pi * std::log((pi + kLogEps) / (static_cast<double>(b[i]) + kLogEps));
    }
    return sum / pixel_count(a);
}

template <typename T>
LossGrad<T> kl_divergence_grad(const SoftPrediction<T>& p, const SoftPrediction<T>& q) {
    check_pair(p, q);
    const auto& a = p.probs;
    const auto& b = q.probs;
    LossGrad<T> out;
    out.d_first = Tensor<T>(a.n(), a.c(), a.h(), a.w());
    out.d_second = Tensor<T>(a.n(), a.c(), a.h(), a.w());
    const double inv = 1.0 / pixel_count(a);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double pi = a[i];
        const double qi = b[i];
        const double lr = std::log((pi + kLogEps) / (qi + kLogEps));
        sum += pi * lr;
        out.d_first[i] = static_cast<T>((lr + pi / (pi + kLogEps)) * inv);
        out.d_second[i] = static_cast<T>(-pi / (qi + kLogEps) * inv);
    }
    out.value = sum * inv;
    return out;
}

template <typename T>
double supervised_loss(const SoftPrediction<T>& pred, const LabelMask& y, SupervisedOptions options) {
    return supervised_loss_grad(pred, y, options).value;
}

template <typename T>
LossGrad<T> supervised_loss_grad(const SoftPrediction<T>& pred, const LabelMask& y,
                                 SupervisedOptions options) {
    check_labels(pred, y);
    const auto& p = pred.probs;
    const std::size_t hw = p.plane_size();
    const int k = p.c();
    LossGrad<T> out;
    out.d_first = Tensor<T>(p.n(), p.c(), p.h(), p.w());
    const double inv = 1.0 / pixel_count(p);
    double ce = 0.0;
    for (int n = 0; n < p.n(); ++n) {
        const T* s = p.sample(n);
        T* d = out.d_first.sample(n);
        for (std::size_t i = 0; i < hw; ++i) {
            const int label = y.labels[n * hw + i];
            const double pv = s[label * hw + i];
            ce -= std::log(pv + kLogEps);
            d[label * hw + i] = static_cast<T>(-inv / (pv + kLogEps));
        }
    }
    out.value = ce * inv;
    if (options.soft_dice && k > 1) {
        // 1 - mean_{b, k>0} (2 sum p*g + eps) / (sum p + sum g + eps)
        constexpr double eps = 1e-6;
        const double terms = static_cast<double>(p.n()) * (k - 1);
        double dice_sum = 0.0;
        for (int n = 0; n < p.n(); ++n) {
            for (int c = 1; c < k; ++c) {
                const T* s = p.plane(n, c);
                double inter = 0, psum = 0, gsum = 0;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double g = y.labels[n * hw + i] == c ? 1.0 : 0.0;
                    inter += s[i] * g;
                    psum += s[i];
                    gsum += g;
                }
                const double num = 2.0 * inter + eps;
                const double den = psum + gsum + eps;
                dice_sum += num / den;
                T* d = out.d_first.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) {
                    const double g = y.labels[n * hw + i] == c ? 1.0 : 0.0;
                    const double dd = (2.0 * g * den - num) / (den * den);
                    d[i] = static_cast<T>(d[i] - dd / terms);
                }
            }
        }
        out.value += 1.0 - dice_sum / terms;
    }
    return out;
}

template double kl_divergence<float>(const SoftPrediction<float>&, const SoftPrediction<float>&);
template double kl_divergence<double>(const SoftPrediction<double>&, const SoftPrediction<double>&);
template LossGrad<float> kl_divergence_grad<float>(const SoftPrediction<float>&,
                                                   const SoftPrediction<float>&);
template LossGrad<double> kl_divergence_grad<double>(const SoftPrediction<double>&,
                                                     const SoftPrediction<double>&);
template double supervised_loss<float>(const SoftPrediction<float>&, const LabelMask&, SupervisedOptions);
template double supervised_loss<double>(const SoftPrediction<double>&, const LabelMask&,
                                        SupervisedOptions);
template LossGrad<float> supervised_loss_grad<float>(const SoftPrediction<float>&, const LabelMask&,
                                                     SupervisedOptions);
template LossGrad<double> supervised_loss_grad<double>(const SoftPrediction<double>&, const LabelMask&,
                                                       SupervisedOptions);

}  // namespace advsdg::loss
