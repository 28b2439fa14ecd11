// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the unit and acceptance
// suites. Deliberately naive: plain loops, no shared code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <vector>

#include "advsdg/tensor.hpp"

namespace advsdg::testing {

/// Linear interpolation between order statistics of a sorted copy.
inline double percentile_oracle(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Dice from explicit index sets.
inline double dice_oracle(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt, int k) {
    std::set<std::size_t> p, g, both;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == k) p.insert(i);
        if (gt[i] == k) g.insert(i);
    }
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::inserter(both, both.begin()));
    if (p.empty() && g.empty()) return 1.0;
    return 2.0 * static_cast<double>(both.size()) / static_cast<double>(p.size() + g.size());
}

/// Double loop over (p, n): mean_p log(exp(s_pp) / (exp(s_pp) + sum_{n != p} exp(s_pn))),
/// where s_pn = query_p . key_n / tau.
inline double contrastive_oracle(const std::vector<std::vector<double>>& query,
                                 const std::vector<std::vector<double>>& positive,
                                 const std::vector<std::vector<double>>& negatives_of, double tau,
                                 double logit_shift = 0.0) {
    const std::size_t P = query.size();
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    double total = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        const double pos = std::exp(dot(query[p], positive[p]) / tau + logit_shift);
        double denom = pos;
        for (std::size_t n = 0; n < P; ++n) {
            if (n == p) continue;
            denom += std::exp(dot(negatives_of[p], positive[n]) / tau + logit_shift);
        }
        total += std::log(pos / denom);
    }
    return total / static_cast<double>(P);
}

/// Direct-summation 2D convolution, zero padding, cross-correlation convention.
inline Tensor<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                    int stride, int pad) {
    const int k = w.h();
    const int oh = (x.h() + 2 * pad - k) / stride + 1;
    const int ow = (x.w() + 2 * pad - k) / stride + 1;
    Tensor<double> y(x.n(), w.n(), oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int o = 0; o < w.n(); ++o)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    double s = b[static_cast<std::size_t>(o)];
                    for (int c = 0; c < x.c(); ++c)
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) {
                                const int sy = yy * stride - pad + i;
                                const int sx = xx * stride - pad + j;
                                if (sy < 0 || sx < 0 || sy >= x.h() || sx >= x.w()) continue;
                                s += x(n, c, sy, sx) * w(o, c, i, j);
                            }
                    y(n, o, yy, xx) = s;
                }
    return y;
}

template <typename T>
void fill_normal(Tensor<T>& t, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    for (auto& v : t.values()) v = static_cast<T>(d(rng));
}

/// Random simplex over K classes at every pixel.
template <typename T>
Tensor<T> random_simplex(int n, int k, int h, int w, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    Tensor<T> t(n, k, h, w);
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double sum = 0.0;
                std::vector<double> v(static_cast<std::size_t>(k));
                for (auto& e : v) sum += (e = g(rng) + 1e-3);
                for (int c = 0; c < k; ++c) t(b, c, y, x) = static_cast<T>(v[static_cast<std::size_t>(c)] / sum);
            }
    return t;
}

/// |a - n| / max(|a|, |n|, floor): relative error with an absolute floor for tiny gradients.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f with respect to *x.
inline double central_difference(double* x, const std::function<double()>& f, double h = 1e-6) {
    const double saved = *x;
    *x = saved + h;
    const double up = f();
    *x = saved - h;
    const double down = f();
    *x = saved;
    return (up - down) / (2.0 * h);
}

}  // namespace advsdg::testing
