// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace advsdg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const RowMat<T>>;

// Unfolds one sample [C, H, W] into [C*k*k, OH*OW].
template <typename T>
void im2col(const T* src, int channels, int h, int w, int k, int stride, int pad, int oy0, int oy1,
            int ow, T* cols) {
    const std::size_t opix = static_cast<std::size_t>(oy1 - oy0) * ow;
    for (int c = 0; c < channels; ++c) {
        const T* plane = src + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * opix;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy - oy0) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, T{});
                        continue;
                    }
                    const T* srow = plane + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        const int lo = std::max(0, pad - kx);
                        const int hi = std::min(ow, w + pad - kx);
                        std::fill(dst, dst + std::max(lo, 0), T{});
                        if (hi > lo) std::memcpy(dst + lo, srow + lo - pad + kx, sizeof(T) * (hi - lo));
                        std::fill(dst + std::max(hi, lo), dst + ow, T{});
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            dst[ox] = (ix >= 0 && ix < w) ? srow[ix] : T{};
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, int channels, int h, int w, int k, int stride, int pad, int oy0, int oy1,
            int ow, T* dst) {
    const std::size_t opix = static_cast<std::size_t>(oy1 - oy0) * ow;
    for (int c = 0; c < channels; ++c) {
        T* plane = dst + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * opix;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy - oy0) * ow;
                    T* drow = plane + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        const int lo = std::max(0, pad - kx);
                        const int hi = std::min(ow, w + pad - kx);
                        const int shift = kx - pad;
                        for (int ox = lo; ox < hi; ++ox) drow[ox + shift] += src[ox];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < w) drow[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

// Output rows per im2col block, sized so a block of columns stays cache resident.
int rows_per_chunk(int kk, int ow, int oh) {
    constexpr int kTargetElems = 24 * 1024;
    return std::clamp(kTargetElems / std::max(1, kk * ow), 1, oh);
}

template <typename T>
thread_local std::vector<T> tls_cols;
template <typename T>
thread_local std::vector<T> tls_dcols;
template <typename T>
thread_local std::vector<T> tls_pad;

// Direct 3x3, stride 1, pad 1 path. At the channel counts used here the GEMM
// route spends most of its time unfolding, so convolve padded planes directly.
constexpr int kDirectMaxChannels = 32;
constexpr int kDirectMinWidth = 16;

template <typename T>
void pad_planes(const T* src, int channels, int h, int w, T* dst) {
    const int wp = w + 2;
    std::fill(dst, dst + static_cast<std::size_t>(channels) * (h + 2) * wp, T{});
    for (int c = 0; c < channels; ++c) {
        const T* s = src + static_cast<std::size_t>(c) * h * w;
        T* d = dst + static_cast<std::size_t>(c) * (h + 2) * wp + wp + 1;
        for (int y = 0; y < h; ++y) std::memcpy(d + static_cast<std::size_t>(y) * wp, s + static_cast<std::size_t>(y) * w, sizeof(T) * w);
    }
}

// y[o] = bias[o] + sum_c w[o, c] (*) xp[c]; weights laid out [out, in, 3, 3].
template <typename T, int OB>
void direct_rows(const T* xp, int in, int h, int w, const T* wt, int o0, T* y) {
    const int wp = w + 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int yy = 0; yy < h; ++yy) {
        T* out[OB];
        for (int i = 0; i < OB; ++i) out[i] = y + (o0 + i) * hw + static_cast<std::size_t>(yy) * w;
        for (int c = 0; c < in; ++c) {
            const T* r0 = xp + (static_cast<std::size_t>(c) * (h + 2) + yy) * wp;
            const T* r1 = r0 + wp;
            const T* r2 = r1 + wp;
            T k[OB][9];
            for (int i = 0; i < OB; ++i) {
                const T* src = wt + (static_cast<std::size_t>(o0 + i) * in + c) * 9;
                for (int j = 0; j < 9; ++j) k[i][j] = src[j];
            }
            for (int i = 0; i < OB; ++i) {
                T* __restrict o = out[i];
                const T* kk = k[i];
                for (int x = 0; x < w; ++x) {
                    o[x] += kk[0] * r0[x] + kk[1] * r0[x + 1] + kk[2] * r0[x + 2] + kk[3] * r1[x] +
                            kk[4] * r1[x + 1] + kk[5] * r1[x + 2] + kk[6] * r2[x] + kk[7] * r2[x + 1] +
                            kk[8] * r2[x + 2];
                }
            }
        }
    }
}

template <typename T>
void direct_conv3x3(const T* xp, int in, int h, int w, const T* wt, const T* bias, int out, T* y) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int o = 0; o < out; ++o) std::fill(y + o * hw, y + (o + 1) * hw, bias != nullptr ? bias[o] : T{});
    int o = 0;
    for (; o + 4 <= out; o += 4) direct_rows<T, 4>(xp, in, h, w, wt, o, y);
    for (; o < out; ++o) direct_rows<T, 1>(xp, in, h, w, wt, o, y);
}

// dw[o, c, ky, kx] += sum_{y, x} dy[o][y][x] * xp[c][y + ky][x + kx]
// Sum with a fixed association order. Eigen's own reductions peel by pointer
// alignment, so equal inputs at different addresses could round differently.
template <typename T>
T ordered_sum(const T* p, std::size_t n) {
    constexpr int kLanes = 32 / sizeof(T) * 2;
    using Lane = Eigen::Array<T, kLanes, 1>;
    using CMap = Eigen::Map<const Lane, Eigen::Unaligned>;
    Lane acc = Lane::Zero();
    const std::size_t body = n - n % kLanes;
    for (std::size_t i = 0; i < body; i += kLanes) acc += CMap(p + i);
    T tail{};
    for (std::size_t i = body; i < n; ++i) tail += p[i];
    return acc.sum() + tail;
}

template <typename T>
void direct_weight_grad(const T* xp, int in, int h, int w, const T* dy, int out, T* dw) {
    constexpr int kLanes = 32 / sizeof(T) * 2;
    using Lane = Eigen::Array<T, kLanes, 1>;
    using CMap = Eigen::Map<const Lane, Eigen::Unaligned>;
    const int wp = w + 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const int body = w - w % kLanes;
    for (int o = 0; o < out; ++o) {
        for (int c = 0; c < in; ++c) {
            Lane a0 = Lane::Zero(), a1 = Lane::Zero(), a2 = Lane::Zero(), a3 = Lane::Zero(), a4 = Lane::Zero(),
                 a5 = Lane::Zero(), a6 = Lane::Zero(), a7 = Lane::Zero(), a8 = Lane::Zero();
            T tail[9] = {};
            for (int yy = 0; yy < h; ++yy) {
                const T* g = dy + o * hw + static_cast<std::size_t>(yy) * w;
                const T* r0 = xp + (static_cast<std::size_t>(c) * (h + 2) + yy) * wp;
                const T* r1 = r0 + wp;
                const T* r2 = r1 + wp;
                for (int x = 0; x < body; x += kLanes) {
                    const Lane gv = CMap(g + x);
                    a0 += gv * CMap(r0 + x);
                    a1 += gv * CMap(r0 + x + 1);
                    a2 += gv * CMap(r0 + x + 2);
                    a3 += gv * CMap(r1 + x);
                    a4 += gv * CMap(r1 + x + 1);
                    a5 += gv * CMap(r1 + x + 2);
                    a6 += gv * CMap(r2 + x);
                    a7 += gv * CMap(r2 + x + 1);
                    a8 += gv * CMap(r2 + x + 2);
                }
                for (int x = body; x < w; ++x) {
                    const T* rows[3] = {r0, r1, r2};
                    for (int j = 0; j < 9; ++j) tail[j] += g[x] * rows[j / 3][x + j % 3];
                }
            }
            const T sums[9] = {a0.sum(), a1.sum(), a2.sum(), a3.sum(), a4.sum(), a5.sum(), a6.sum(), a7.sum(), a8.sum()};
            T* d = dw + (static_cast<std::size_t>(o) * in + c) * 9;
            for (int j = 0; j < 9; ++j) d[j] += sums[j] + tail[j];
        }
    }
}

}  // namespace

template <typename T>
void zero_grad(const ParameterList<T>& params) {
    for (auto* p : params) p->grad.zero();
}

template <typename T>
double grad_norm(const ParameterList<T>& params) {
    double sq = 0.0;
    for (const auto* p : params) {
        for (T g : p->grad.values()) sq += static_cast<double>(g) * g;
    }
    return std::sqrt(sq);
}

template <typename T>
double clip_grad_norm(const ParameterList<T>& params, double max_norm) {
    const double norm = grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const T scale = static_cast<T>(max_norm / norm);
        for (auto* p : params) {
            for (T& g : p->grad.values()) g *= scale;
        }
    }
    return norm;
}

template <typename T>
bool grads_finite(const ParameterList<T>& params) {
    for (const auto* p : params) {
        for (T g : p->grad.values()) {
            if (!std::isfinite(g)) return false;
        }
    }
    return true;
}

template <typename T>
std::uint64_t parameter_hash(const ParameterList<T>& params) {
    Fnv1a h;
    for (const auto* p : params) h.update_values(p->value.values());
    return h.digest();
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int pad)
    : weight(name + ".weight", out_channels, in_channels, kernel, kernel),
      bias(name + ".bias", 1, out_channels, 1, 1),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad < 0 ? kernel / 2 : pad) {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0) {
        throw ShapeError("Conv2d " + name + ": non-positive extent");
    }
}

template <typename T>
void Conv2d<T>::init_kaiming(Rng& rng, double negative_slope) {
    const double fan_in = static_cast<double>(in_) * k_ * k_;
    const double gain = std::sqrt(2.0 / (1.0 + negative_slope * negative_slope));
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    for (T& v : weight.value.values()) v = static_cast<T>(dist(rng));
    bias.value.zero();
}

template <typename T>
bool Conv2d<T>::use_direct(int width) const noexcept {
    return k_ == 3 && stride_ == 1 && pad_ == 1 && std::max(in_, out_) <= kDirectMaxChannels &&
           width >= kDirectMinWidth;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
    if (x.c() != in_) {
        throw ShapeError(weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                         std::to_string(x.c()));
    }
    const int oh = output_extent(x.h());
    const int ow = output_extent(x.w());
    if (oh <= 0 || ow <= 0) throw ShapeError(weight.name + ": input too small");
    Tensor<T> y(x.n(), out_, oh, ow);
    if (use_direct(x.w())) {
        auto& pad = tls_pad<T>;
        pad.resize(static_cast<std::size_t>(in_) * (x.h() + 2) * (x.w() + 2));
        for (int n = 0; n < x.n(); ++n) {
            pad_planes(x.sample(n), in_, x.h(), x.w(), pad.data());
            direct_conv3x3(pad.data(), in_, x.h(), x.w(), weight.value.data(), bias.value.data(), out_, y.sample(n));
        }
        return y;
    }
    const int kk = in_ * k_ * k_;
    const Eigen::Index opix = static_cast<Eigen::Index>(oh) * ow;
    CMapRow<T> wmat(weight.value.data(), out_, kk);
    const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);
    const int chunk = rows_per_chunk(kk, ow, oh);
    auto& cols = tls_cols<T>;
    if (!direct) cols.resize(static_cast<std::size_t>(kk) * chunk * ow);
    for (int n = 0; n < x.n(); ++n) {
        MapRow<T> ymat(y.sample(n), out_, opix);
        if (direct) {
            CMapRow<T> cmat(x.sample(n), kk, opix);
            ymat.noalias() = wmat * cmat;
        } else {
            for (int oy0 = 0; oy0 < oh; oy0 += chunk) {
                const int oy1 = std::min(oh, oy0 + chunk);
                const Eigen::Index cpix = static_cast<Eigen::Index>(oy1 - oy0) * ow;
                im2col(x.sample(n), in_, x.h(), x.w(), k_, stride_, pad_, oy0, oy1, ow, cols.data());
                CMapRow<T> cmat(cols.data(), kk, cpix);
                ymat.middleCols(static_cast<Eigen::Index>(oy0) * ow, cpix).noalias() = wmat * cmat;
            }
        }
        for (int o = 0; o < out_; ++o) ymat.row(o).array() += bias.value[o];
    }
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx,
                              bool accumulate) {
    const int oh = dy.h();
    const int ow = dy.w();
    const int kk = in_ * k_ * k_;
    const Eigen::Index opix = static_cast<Eigen::Index>(oh) * ow;
    CMapRow<T> wmat(weight.value.data(), out_, kk);
    MapRow<T> dwmat(weight.grad.data(), out_, kk);
    const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);
    const int chunk = rows_per_chunk(kk, ow, oh);
    auto& cols = tls_cols<T>;
    auto& dcols = tls_dcols<T>;
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    if (use_direct(x.w())) {
        auto& pad = tls_pad<T>;
        // The input gradient is a convolution of dy with the flipped, transposed kernel.
        std::vector<T> flipped;
        if (need_dx) {
            flipped.resize(weight.value.size());
            for (int o = 0; o < out_; ++o) {
                for (int c = 0; c < in_; ++c) {
                    for (int j = 0; j < 9; ++j) {
                        flipped[(static_cast<std::size_t>(c) * out_ + o) * 9 + (8 - j)] =
                            weight.value[(static_cast<std::size_t>(o) * in_ + c) * 9 + j];
                    }
                }
            }
        }
        for (int n = 0; n < x.n(); ++n) {
            if (accumulate) {
                for (int o = 0; o < out_; ++o) {
                    bias.grad[o] += ordered_sum(dy.sample(n) + static_cast<std::size_t>(o) * opix,
                                                static_cast<std::size_t>(opix));
                }
                pad.resize(static_cast<std::size_t>(in_) * (x.h() + 2) * (x.w() + 2));
                pad_planes(x.sample(n), in_, x.h(), x.w(), pad.data());
                direct_weight_grad(pad.data(), in_, x.h(), x.w(), dy.sample(n), out_, weight.grad.data());
            }
            if (need_dx) {
                pad.resize(static_cast<std::size_t>(out_) * (oh + 2) * (ow + 2));
                pad_planes(dy.sample(n), out_, oh, ow, pad.data());
                direct_conv3x3<T>(pad.data(), out_, oh, ow, flipped.data(), nullptr, in_, dx.sample(n));
            }
        }
        return dx;
    }
    if (!direct) {
        cols.resize(static_cast<std::size_t>(kk) * chunk * ow);
        dcols.resize(static_cast<std::size_t>(kk) * chunk * ow);
    }
    for (int n = 0; n < x.n(); ++n) {
        CMapRow<T> dymat(dy.sample(n), out_, opix);
        if (accumulate) {
            for (int o = 0; o < out_; ++o) {
                bias.grad[o] += ordered_sum(dy.sample(n) + static_cast<std::size_t>(o) * opix,
                                            static_cast<std::size_t>(opix));
            }
        }
        if (direct) {
            if (accumulate) {
                CMapRow<T> cmat(x.sample(n), kk, opix);
                dwmat.noalias() += dymat * cmat.transpose();
            }
            if (need_dx) {
                MapRow<T> dxmat(dx.sample(n), kk, opix);
                dxmat.noalias() = wmat.transpose() * dymat;
            }
            continue;
        }
        for (int oy0 = 0; oy0 < oh; oy0 += chunk) {
            const int oy1 = std::min(oh, oy0 + chunk);
            const Eigen::Index cpix = static_cast<Eigen::Index>(oy1 - oy0) * ow;
            const auto dyblock = dymat.middleCols(static_cast<Eigen::Index>(oy0) * ow, cpix);
            if (accumulate) {
                im2col(x.sample(n), in_, x.h(), x.w(), k_, stride_, pad_, oy0, oy1, ow, cols.data());
                CMapRow<T> cmat(cols.data(), kk, cpix);
                dwmat.noalias() += dyblock * cmat.transpose();
            }
            if (need_dx) {
                MapRow<T> dcmat(dcols.data(), kk, cpix);
                dcmat.noalias() = wmat.transpose() * dyblock;
                col2im(dcols.data(), in_, x.h(), x.w(), k_, stride_, pad_, oy0, oy1, ow, dx.sample(n));
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Elementwise / normalization

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    Tensor<T> y(x.n(), x.c(), x.h(), x.w());
    const T* src = x.data();
    T* dst = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T{} ? src[i] : slope * src[i];
    return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope) {
    Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
    const T* src = x.data();
    const T* g = dy.data();
    T* dst = dx.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T{} ? g[i] : slope * g[i];
    return dx;
}

template <typename T>
ChannelStats<T> channel_stats(const Tensor<T>& x) {
    ChannelStats<T> s;
    const std::size_t planes = static_cast<std::size_t>(x.n()) * x.c();
    const std::size_t hw = x.plane_size();
    s.mean.resize(planes);
    s.stddev.resize(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        const T* v = x.data() + p * hw;
        double sum = 0.0;
        for (std::size_t i = 0; i < hw; ++i) sum += v[i];
        const double mu = sum / static_cast<double>(hw);
        double sq = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            const double d = v[i] - mu;
            sq += d * d;
        }
        s.mean[p] = static_cast<T>(mu);
        s.stddev[p] = static_cast<T>(std::sqrt(sq / static_cast<double>(hw)));
    }
    return s;
}

template <typename T>
InstanceNorm<T>::InstanceNorm(const std::string& name, int channels, T eps)
    : gamma(name + ".gamma", 1, channels, 1, 1), beta(name + ".beta", 1, channels, 1, 1), eps_(eps) {
    gamma.value.fill(T(1));
}

template <typename T>
Tensor<T> InstanceNorm<T>::forward(const Tensor<T>& x, Cache* cache) const {
    const std::size_t hw = x.plane_size();
    Tensor<T> y(x.n(), x.c(), x.h(), x.w());
    Tensor<T> xhat(x.n(), x.c(), x.h(), x.w());
    std::vector<T> inv(static_cast<std::size_t>(x.n()) * x.c());
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* v = x.plane(n, c);
            T mu = 0;
            for (std::size_t i = 0; i < hw; ++i) mu += v[i];
            mu /= static_cast<T>(hw);
            T var = 0;
            for (std::size_t i = 0; i < hw; ++i) var += (v[i] - mu) * (v[i] - mu);
            var /= static_cast<T>(hw);
            const T is = T(1) / std::sqrt(var + eps_);
            inv[static_cast<std::size_t>(n) * x.c() + c] = is;
            T* xh = xhat.plane(n, c);
            T* out = y.plane(n, c);
            const T g = gamma.value[c];
            const T b = beta.value[c];
            for (std::size_t i = 0; i < hw; ++i) {
                xh[i] = (v[i] - mu) * is;
                out[i] = g * xh[i] + b;
            }
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv);
    }
    return y;
}

template <typename T>
Tensor<T> InstanceNorm<T>::backward(const Cache& cache, const Tensor<T>& dy, bool accumulate) {
    const Tensor<T>& xhat = cache.normalized;
    const std::size_t hw = xhat.plane_size();
    const T inv_hw = T(1) / static_cast<T>(hw);
    Tensor<T> dx(xhat.n(), xhat.c(), xhat.h(), xhat.w());
    for (int n = 0; n < xhat.n(); ++n) {
        for (int c = 0; c < xhat.c(); ++c) {
            const T* g = dy.plane(n, c);
            const T* xh = xhat.plane(n, c);
            T sum_g = 0, sum_gx = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
            if (accumulate) {
                gamma.grad[c] += sum_gx;
                beta.grad[c] += sum_g;
            }
            const T gm = gamma.value[c];
            const T is = cache.inv_std[static_cast<std::size_t>(n) * xhat.c() + c];
            T* d = dx.plane(n, c);
            const T mg = sum_g * inv_hw;
            const T mgx = sum_gx * inv_hw;
            for (std::size_t i = 0; i < hw; ++i) d[i] = gm * is * (g[i] - mg - xh[i] * mgx);
        }
    }
    return dx;
}

template <typename T>
Tensor<T> adain(const Tensor<T>& x, std::span<const T> style_mean, std::span<const T> style_std,
                AdainCache<T>* cache, T eps) {
    if (style_mean.size() != static_cast<std::size_t>(x.c()) ||
        style_std.size() != static_cast<std::size_t>(x.c())) {
        throw ShapeError("adain: style vectors have " + std::to_string(style_mean.size()) +
                         " channels, features have " + std::to_string(x.c()));
    }
    const std::size_t hw = x.plane_size();
    Tensor<T> y(x.n(), x.c(), x.h(), x.w());
    Tensor<T> xhat(x.n(), x.c(), x.h(), x.w());
    const std::size_t planes = static_cast<std::size_t>(x.n()) * x.c();
    std::vector<T> sig(planes), den(planes);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* v = x.plane(n, c);
            T mu = 0;
            for (std::size_t i = 0; i < hw; ++i) mu += v[i];
            mu /= static_cast<T>(hw);
            T var = 0;
            for (std::size_t i = 0; i < hw; ++i) var += (v[i] - mu) * (v[i] - mu);
            var /= static_cast<T>(hw);
            const T sigma = std::sqrt(var);
            const T d = sigma + eps;
            const std::size_t idx = static_cast<std::size_t>(n) * x.c() + c;
            sig[idx] = sigma;
            den[idx] = d;
            T* xh = xhat.plane(n, c);
            T* out = y.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                xh[i] = (v[i] - mu) / d;
                out[i] = style_std[c] * xh[i] + style_mean[c];
            }
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(xhat);
        cache->sigma = std::move(sig);
        cache->denom = std::move(den);
    }
    return y;
}

// With u = x - mu, d = sigma + eps, xhat = u / d:
// dL/dx_i = (g_i - mean(g)) / d - (sum_j g_j u_j) / d^2 * u_i / (N sigma).
template <typename T>
Tensor<T> adain_backward(const AdainCache<T>& cache, std::span<const T> style_std,
                         const Tensor<T>& dy) {
    const Tensor<T>& xhat = cache.normalized;
    const std::size_t hw = xhat.plane_size();
    const T inv_hw = T(1) / static_cast<T>(hw);
    Tensor<T> dx(xhat.n(), xhat.c(), xhat.h(), xhat.w());
    for (int n = 0; n < xhat.n(); ++n) {
        for (int c = 0; c < xhat.c(); ++c) {
            const std::size_t idx = static_cast<std::size_t>(n) * xhat.c() + c;
            const T d = cache.denom[idx];
            const T sigma = cache.sigma[idx];
            const T s = style_std[c];
            const T* g = dy.plane(n, c);
            const T* xh = xhat.plane(n, c);
            T sum_g = 0, sum_gx = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
            // xh = u / d, so sum_j g_j u_j / d^2 * u_i / (N sigma) = sum_gx * xh_i * d / (N sigma d)
            const T coeff = sigma > T{} ? sum_gx * inv_hw * d / sigma : T{};
            T* out = dx.plane(n, c);
            const T mg = sum_g * inv_hw;
            for (std::size_t i = 0; i < hw; ++i) out[i] = s * ((g[i] - mg) - xh[i] * coeff) / d;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Resampling and plumbing

template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeError("max_pool2x2: odd spatial extent");
    const int oh = x.h() / 2;
    const int ow = x.w() / 2;
    Tensor<T> y(x.n(), x.c(), oh, ow);
    if (argmax != nullptr) argmax->resize(y.size());
    std::size_t o = 0;
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* p = x.plane(n, c);
            T* q = y.plane(n, c);
            for (int yy = 0; yy < oh; ++yy) {
                for (int xx = 0; xx < ow; ++xx, ++o) {
                    const std::uint32_t i0 = static_cast<std::uint32_t>(2 * yy * x.w() + 2 * xx);
                    std::uint32_t best = i0;
                    for (std::uint32_t cand :
                         {i0 + 1, i0 + static_cast<std::uint32_t>(x.w()),
                          i0 + static_cast<std::uint32_t>(x.w()) + 1}) {
                        if (p[cand] > p[best]) best = cand;
                    }
                    q[yy * ow + xx] = p[best];
                    if (argmax != nullptr) (*argmax)[o] = best;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> max_pool2x2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                               const std::array<int, 4>& input_shape) {
    Tensor<T> dx(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    std::size_t o = 0;
    for (int n = 0; n < dy.n(); ++n) {
        for (int c = 0; c < dy.c(); ++c) {
            const T* g = dy.plane(n, c);
            T* d = dx.plane(n, c);
            for (std::size_t i = 0; i < dy.plane_size(); ++i, ++o) d[argmax[o]] += g[i];
        }
    }
    return dx;
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    Tensor<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* p = x.plane(n, c);
            T* q = y.plane(n, c);
            for (int yy = 0; yy < y.h(); ++yy) {
                const T* srow = p + (yy / 2) * x.w();
                T* drow = q + yy * y.w();
                for (int xx = 0; xx < y.w(); ++xx) drow[xx] = srow[xx / 2];
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
    for (int n = 0; n < dy.n(); ++n) {
        for (int c = 0; c < dy.c(); ++c) {
            const T* g = dy.plane(n, c);
            T* d = dx.plane(n, c);
            for (int yy = 0; yy < dy.h(); ++yy) {
                const T* grow = g + yy * dy.w();
                T* drow = d + (yy / 2) * dx.w();
                for (int xx = 0; xx < dy.w(); ++xx) drow[xx / 2] += grow[xx];
            }
        }
    }
    return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
        throw ShapeError("concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        std::copy_n(a.sample(n), a.sample_size(), y.sample(n));
        std::copy_n(b.sample(n), b.sample_size(), y.sample(n) + a.sample_size());
    }
    return y;
}

template <typename T>
void split_channels(const Tensor<T>& d, int channels_a, Tensor<T>& da, Tensor<T>& db) {
    da = Tensor<T>(d.n(), channels_a, d.h(), d.w());
    db = Tensor<T>(d.n(), d.c() - channels_a, d.h(), d.w());
    for (int n = 0; n < d.n(); ++n) {
        std::copy_n(d.sample(n), da.sample_size(), da.sample(n));
        std::copy_n(d.sample(n) + da.sample_size(), db.sample_size(), db.sample(n));
    }
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
    Tensor<T> p(logits.n(), logits.c(), logits.h(), logits.w());
    const std::size_t hw = logits.plane_size();
    const int k = logits.c();
    for (int n = 0; n < logits.n(); ++n) {
        const T* z = logits.sample(n);
        T* out = p.sample(n);
        for (std::size_t i = 0; i < hw; ++i) {
            T mx = z[i];
            for (int c = 1; c < k; ++c) mx = std::max(mx, z[c * hw + i]);
            T sum = 0;
            for (int c = 0; c < k; ++c) {
                const T e = std::exp(z[c * hw + i] - mx);
                out[c * hw + i] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (int c = 0; c < k; ++c) out[c * hw + i] *= inv;
        }
    }
    return p;
}

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
    Tensor<T> dz(probs.n(), probs.c(), probs.h(), probs.w());
    const std::size_t hw = probs.plane_size();
    const int k = probs.c();
    for (int n = 0; n < probs.n(); ++n) {
        const T* p = probs.sample(n);
        const T* g = dprobs.sample(n);
        T* out = dz.sample(n);
        for (std::size_t i = 0; i < hw; ++i) {
            T dot = 0;
            for (int c = 0; c < k; ++c) dot += p[c * hw + i] * g[c * hw + i];
            for (int c = 0; c < k; ++c) out[c * hw + i] = p[c * hw + i] * (g[c * hw + i] - dot);
        }
    }
    return dz;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void Adam<T>::step(const ParameterList<T>& params, double lr) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->value.size(), 0.0);
            v_[i].assign(params[i]->value.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: parameter group changed size");
    ++t_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i]->value;
        const auto& grad = params[i]->grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            value[j] = static_cast<T>(value[j] - lr * mhat / (std::sqrt(vhat) + options_.eps));
        }
    }
}

#define ADVSDG_INSTANTIATE(T)                                                                     \
    template void zero_grad<T>(const ParameterList<T>&);                                          \
    template double grad_norm<T>(const ParameterList<T>&);                                        \
    template double clip_grad_norm<T>(const ParameterList<T>&, double);                           \
    template bool grads_finite<T>(const ParameterList<T>&);                                       \
    template std::uint64_t parameter_hash<T>(const ParameterList<T>&);                            \
    template class Conv2d<T>;                                                                     \
    template class InstanceNorm<T>;                                                               \
    template class Adam<T>;                                                                       \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                        \
    template Tensor<T> leaky_relu_backward<T>(const Tensor<T>&, const Tensor<T>&, T);             \
    template ChannelStats<T> channel_stats<T>(const Tensor<T>&);                                  \
    template Tensor<T> adain<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,         \
                                AdainCache<T>*, T);                                               \
    template Tensor<T> adain_backward<T>(const AdainCache<T>&, std::span<const T>,                \
                                         const Tensor<T>&);                                       \
    template Tensor<T> max_pool2x2<T>(const Tensor<T>&, std::vector<std::uint32_t>*);             \
    template Tensor<T> max_pool2x2_backward<T>(const Tensor<T>&, const std::vector<std::uint32_t>&, \
                                               const std::array<int, 4>&);                        \
    template Tensor<T> upsample2x<T>(const Tensor<T>&);                                           \
    template Tensor<T> upsample2x_backward<T>(const Tensor<T>&);                                  \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template void split_channels<T>(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);               \
    template Tensor<T> softmax_channels<T>(const Tensor<T>&);                                     \
    template Tensor<T> softmax_channels_backward<T>(const Tensor<T>&, const Tensor<T>&);

ADVSDG_INSTANTIATE(float)
ADVSDG_INSTANTIATE(double)

#undef ADVSDG_INSTANTIATE

}  // namespace advsdg::nn
