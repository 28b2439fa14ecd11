// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/synthesizer.hpp"

#include <cmath>
#include <string>

namespace advsdg::synth {

namespace {

constexpr double kStyleFloor = 0.1;
constexpr double kNormEps = 1e-5;

double softplus(double v) { return v > 20.0 ? v : std::log1p(std::exp(v)); }

template <typename T>
std::vector<T> to_vec(const std::vector<double>& v) {
    return {v.begin(), v.end()};
}

}  // namespace

std::vector<int> StyleNoise::channel_counts() const {
    std::vector<int> out;
    out.reserve(mean.size());
    for (const auto& m : mean) out.push_back(static_cast<int>(m.size()));
    return out;
}

StyleNoise sample_style(Rng& rng, std::span<const int> channel_counts) {
    std::normal_distribution<double> normal(0.0, 1.0);
    StyleNoise z;
    for (int c : channel_counts) {
        std::vector<double> m(static_cast<std::size_t>(c));
        std::vector<double> s(static_cast<std::size_t>(c));
        for (int i = 0; i < c; ++i) {
            m[i] = normal(rng);
            s[i] = softplus(normal(rng)) + kStyleFloor;
        }
        z.mean.push_back(std::move(m));
        z.stddev.push_back(std::move(s));
    }
    return z;
}

MixRatio::MixRatio(double alpha) : alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ValueError("mix ratio must lie in [0, 1], got " + std::to_string(alpha));
    }
}

template <typename T>
Synthesizer<T>::Synthesizer(const SynthesizerOptions& options, Rng& init_rng) : options_(options) {
    if (options.blocks < 1 || options.hidden_channels < 1 || options.image_channels < 1) {
        throw ShapeError("synthesizer needs at least one block and channel");
    }
    int in = options.image_channels;
    for (int b = 0; b < options.blocks; ++b) {
        blocks_.emplace_back("synth.block" + std::to_string(b), in, options.hidden_channels, 3);
        blocks_.back().init_kaiming(init_rng, options.leaky_slope);
        in = options.hidden_channels;
    }
    projection_ = nn::Conv2d<T>("synth.proj", in, options.image_channels, 3);
    projection_.init_kaiming(init_rng, 1.0);
}

template <typename T>
Synthesizer<T> Synthesizer<T>::random_init(const SynthesizerOptions& options, std::uint64_t seed) {
    Rng rng = substream(seed, "synth.random_init");
    Synthesizer s(options, rng);
    std::normal_distribution<double> bias(0.0, 0.1);
    for (auto* p : s.parameters()) {
        if (p->name.ends_with(".bias")) {
            for (T& v : p->value.values()) v = static_cast<T>(bias(rng));
        }
    }
    return s;
}

template <typename T>
std::vector<int> Synthesizer<T>::style_channels() const {
    return std::vector<int>(static_cast<std::size_t>(options_.blocks), options_.hidden_channels);
}

template <typename T>
nn::ParameterList<T> Synthesizer<T>::parameters() {
    nn::ParameterList<T> out;
    for (auto& b : blocks_) {
        out.push_back(&b.weight);
        out.push_back(&b.bias);
    }
    out.push_back(&projection_.weight);
    out.push_back(&projection_.bias);
    return out;
}

template <typename T>
std::uint64_t Synthesizer<T>::parameter_hash() const {
    return nn::parameter_hash(const_cast<Synthesizer*>(this)->parameters());
}

template <typename T>
Tensor<T> Synthesizer<T>::forward(const Tensor<T>& image, const StyleNoise& noise,
                                  std::span<const MixRatio> alpha, Cache* cache) const {
    if (image.c() != options_.image_channels) {
        throw ShapeError("synthesize: expected " + std::to_string(options_.image_channels) +
                         " image channels, got " + std::to_string(image.c()));
    }
    if (image.h() < 8 || image.w() < 8) throw ShapeError("synthesize: spatial extent below 8");
    if (alpha.size() != 1 && alpha.size() != static_cast<std::size_t>(image.n())) {
        throw ShapeError("synthesize: need one mix ratio or one per sample");
    }
    if (options_.use_adain && noise.channel_counts() != style_channels()) {
        throw ShapeError("synthesize: style noise channel counts do not match synthesizer blocks");
    }
    const int batch = image.n();
    auto alpha_of = [&](int n) { return alpha.size() == 1 ? alpha[0].value() : alpha[n].value(); };

    bool all_zero = true;
    for (const auto& a : alpha) all_zero = all_zero && a.value() == 0.0;
    if (all_zero && cache == nullptr) return image;

    const T slope = static_cast<T>(options_.leaky_slope);
    Tensor<T> h = image;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        Tensor<T> pre = blocks_[b].forward(h);
        Tensor<T> act = nn::leaky_relu(pre, slope);
        if (cache != nullptr) {
            cache->block_inputs.push_back(std::move(h));
            cache->pre_activations.push_back(pre);
        }
        if (options_.use_adain) {
            const auto sm = to_vec<T>(noise.mean[b]);
            const auto ss = to_vec<T>(noise.stddev[b]);
            nn::AdainCache<T> ac;
            h = nn::adain<T>(act, sm, ss, cache != nullptr ? &ac : nullptr, static_cast<T>(kNormEps));
            if (cache != nullptr) {
                cache->adain.push_back(std::move(ac));
                cache->style_std.push_back(ss);
            }
        } else {
            h = std::move(act);
        }
    }
    Tensor<T> raw = projection_.forward(h);
    if (cache != nullptr) cache->proj_input = std::move(h);

    const std::size_t m = raw.sample_size();
    Tensor<T> out(image.n(), image.c(), image.h(), image.w());
    Tensor<T> rhat(raw.n(), raw.c(), raw.h(), raw.w());
    std::vector<T> r_sigma(batch), r_denom(batch), x_mean(batch), x_sigma(batch);
    for (int n = 0; n < batch; ++n) {
        const T* r = raw.sample(n);
        const T* x = image.sample(n);
        T* rh = rhat.sample(n);
        T* o = out.sample(n);
        const T a = static_cast<T>(alpha_of(n));
        if (options_.restyle_output) {
            double rs = 0, xs = 0;
            for (std::size_t i = 0; i < m; ++i) {
                rs += r[i];
                xs += x[i];
            }
            const double rmu = rs / static_cast<double>(m);
            const double xmu = xs / static_cast<double>(m);
            double rv = 0, xv = 0;
            for (std::size_t i = 0; i < m; ++i) {
                rv += (r[i] - rmu) * (r[i] - rmu);
                xv += (x[i] - xmu) * (x[i] - xmu);
            }
            const T rsig = static_cast<T>(std::sqrt(rv / static_cast<double>(m)));
            const T den = rsig + static_cast<T>(kNormEps);
            const T xsig = static_cast<T>(std::sqrt(xv / static_cast<double>(m)));
            r_sigma[n] = rsig;
            r_denom[n] = den;
            x_mean[n] = static_cast<T>(xmu);
            x_sigma[n] = xsig;
            for (std::size_t i = 0; i < m; ++i) {
                rh[i] = (r[i] - static_cast<T>(rmu)) / den;
                const T restyled = rh[i] * xsig + static_cast<T>(xmu);
                o[i] = a == T(0) ? x[i] : (a == T(1) ? restyled : a * restyled + (T(1) - a) * x[i]);
            }
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                rh[i] = r[i];
                o[i] = a == T(0) ? x[i] : (a == T(1) ? r[i] : a * r[i] + (T(1) - a) * x[i]);
            }
        }
    }
    if (cache != nullptr) {
        cache->raw_normalized = std::move(rhat);
        cache->raw_sigma = std::move(r_sigma);
        cache->raw_denom = std::move(r_denom);
        cache->image_mean = std::move(x_mean);
        cache->image_sigma = std::move(x_sigma);
        cache->image = image;
        cache->alpha.clear();
        for (int n = 0; n < batch; ++n) cache->alpha.push_back(static_cast<T>(alpha_of(n)));
    }
    return out;
}

template <typename T>
Tensor<T> Synthesizer<T>::backward(const Cache& cache, const Tensor<T>& dout, bool need_input_grad) {
    const Tensor<T>& x = cache.image;
    const int batch = x.n();
    const std::size_t m = x.sample_size();
    Tensor<T> draw(batch, x.c(), x.h(), x.w());
    Tensor<T> dimage;
    if (need_input_grad) dimage = Tensor<T>(batch, x.c(), x.h(), x.w());

    for (int n = 0; n < batch; ++n) {
        const T a = cache.alpha[n];
        const T* g = dout.sample(n);
        const T* rh = cache.raw_normalized.sample(n);
        T* dr = draw.sample(n);
        if (!options_.restyle_output) {
            for (std::size_t i = 0; i < m; ++i) dr[i] = a * g[i];
            if (need_input_grad) {
                T* dx = dimage.sample(n);
                for (std::size_t i = 0; i < m; ++i) dx[i] = (T(1) - a) * g[i];
            }
            continue;
        }
        // restyled = rh * xsig + xmu, rh = (r - rmu) / (rsig + eps)
        T sum_g = 0, sum_grh = 0;
        for (std::size_t i = 0; i < m; ++i) {
            sum_g += a * g[i];
            sum_grh += a * g[i] * rh[i];
        }
        const T inv_m = T(1) / static_cast<T>(m);
        const T xsig = cache.image_sigma[n];
        const T den = cache.raw_denom[n];
        const T rsig = cache.raw_sigma[n];
        const T coeff = rsig > T{} ? sum_grh * inv_m * den / rsig : T{};
        for (std::size_t i = 0; i < m; ++i) {
            dr[i] = xsig * ((a * g[i] - sum_g * inv_m) - rh[i] * coeff) / den;
        }
        if (need_input_grad) {
            // d/dx through the blend, the mean shift and the std rescale.
            const T* xv = x.sample(n);
            const T xmu = cache.image_mean[n];
            T* dx = dimage.sample(n);
            for (std::size_t i = 0; i < m; ++i) {
                T v = (T(1) - a) * g[i] + sum_g * inv_m;
                if (xsig > T{}) v += sum_grh * (xv[i] - xmu) * inv_m / xsig;
                dx[i] = v;
            }
        }
    }

    const T slope = static_cast<T>(options_.leaky_slope);
    Tensor<T> dh = projection_.backward(cache.proj_input, draw, true, true);
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
        Tensor<T> dact = options_.use_adain
                             ? nn::adain_backward<T>(cache.adain[b], cache.style_std[b], dh)
                             : std::move(dh);
        Tensor<T> dpre = nn::leaky_relu_backward(cache.pre_activations[b], dact, slope);
        const bool need = b > 0 || need_input_grad;
        dh = blocks_[b].backward(cache.block_inputs[b], dpre, need, true);
    }
    if (need_input_grad) {
        for (std::size_t i = 0; i < dimage.size(); ++i) dimage[i] += dh[i];
    }
    return dimage;
}

template class Synthesizer<float>;
template class Synthesizer<double>;

}  // namespace advsdg::synth
