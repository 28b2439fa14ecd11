// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/segmenter.hpp"

#include <string>

namespace advsdg::seg {

template <typename T>
typename UNet<T>::Block UNet<T>::make_block(const std::string& name, int in, int out, Rng& rng) const {
    Block block;
    for (int u = 0; u < options_.convs_per_stage; ++u) {
        const std::string unit = name + "." + std::to_string(u);
        Unit un{nn::Conv2d<T>(unit + ".conv", u == 0 ? in : out, out, 3),
                nn::InstanceNorm<T>(unit + ".norm", out)};
        un.conv.init_kaiming(rng, options_.leaky_slope);
        block.push_back(std::move(un));
    }
    return block;
}

template <typename T>
UNet<T>::UNet(const SegmenterOptions& options, Rng& init_rng) : options_(options) {
    if (options.stages < 1 || options.base_width < 1 || options.convs_per_stage < 1 ||
        options.classes < 2 || options.image_channels < 1) {
        throw ValueError("segmenter options out of range");
    }
    int in = options.image_channels;
    for (int l = 0; l < options.stages; ++l) {
        const int width = options.base_width << l;
        encoder_.push_back(make_block("seg.enc" + std::to_string(l), in, width, init_rng));
        in = width;
    }
    const int bottom = options.base_width << options.stages;
    bottleneck_ = make_block("seg.mid", in, bottom, init_rng);
    decoder_.resize(static_cast<std::size_t>(options.stages));
    int up = bottom;
    for (int l = options.stages - 1; l >= 0; --l) {
        const int width = options.base_width << l;
        decoder_[l] = make_block("seg.dec" + std::to_string(l), up + width, width, init_rng);
        up = width;
    }
    head_ = nn::Conv2d<T>("seg.head", options.base_width, options.classes, 1, 1, 0);
    head_.init_kaiming(init_rng, 1.0);
}

template <typename T>
Tensor<T> UNet<T>::run_block(const Block& block, Tensor<T> x, std::vector<UnitCache>* cache) const {
    const T slope = static_cast<T>(options_.leaky_slope);
    for (const Unit& u : block) {
        Tensor<T> c = u.conv.forward(x);
        typename nn::InstanceNorm<T>::Cache nc;
        Tensor<T> n = u.norm.forward(c, cache != nullptr ? &nc : nullptr);
        Tensor<T> a = nn::leaky_relu(n, slope);
        if (cache != nullptr) cache->push_back(UnitCache{std::move(x), std::move(nc), std::move(n)});
        x = std::move(a);
    }
    return x;
}

template <typename T>
Tensor<T> UNet<T>::back_block(Block& block, const std::vector<UnitCache>& cache, Tensor<T> dy,
                              bool need_dx, bool accumulate) {
    const T slope = static_cast<T>(options_.leaky_slope);
    for (int u = static_cast<int>(block.size()) - 1; u >= 0; --u) {
        const UnitCache& uc = cache[u];
        Tensor<T> dn = nn::leaky_relu_backward(uc.normalized, dy, slope);
        Tensor<T> dc = block[u].norm.backward(uc.norm, dn, accumulate);
        dy = block[u].conv.backward(uc.input, dc, u > 0 || need_dx, accumulate);
    }
    return dy;
}

template <typename T>
SoftPrediction<T> UNet<T>::forward(const Tensor<T>& image, Cache* cache) const {
    const int div = spatial_divisor();
    if (image.h() % div != 0 || image.w() % div != 0) {
        throw ShapeError("segmenter input " + std::to_string(image.h()) + "x" + std::to_string(image.w()) +
                         " is not divisible by " + std::to_string(div) +
                         "; pad height and width up to the next multiple of " + std::to_string(div));
    }
    if (image.c() != options_.image_channels) {
        throw ShapeError("segmenter expects " + std::to_string(options_.image_channels) + " channels");
    }
    if (cache != nullptr) {
        *cache = Cache{};
        cache->encoder.resize(encoder_.size());
        cache->decoder.resize(decoder_.size());
    }
    std::vector<Tensor<T>> skips;
    Tensor<T> x = image;
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
        x = run_block(encoder_[l], std::move(x), cache != nullptr ? &cache->encoder[l] : nullptr);
        skips.push_back(x);
        std::vector<std::uint32_t> argmax;
        const auto shape = x.shape();
        x = nn::max_pool2x2(x, cache != nullptr ? &argmax : nullptr);
        if (cache != nullptr) {
            cache->pool_argmax.push_back(std::move(argmax));
            cache->pool_shapes.push_back(shape);
        }
    }
    x = run_block(bottleneck_, std::move(x), cache != nullptr ? &cache->bottleneck : nullptr);
    if (cache != nullptr) cache->up_channels.assign(decoder_.size(), 0);
    for (int l = static_cast<int>(decoder_.size()) - 1; l >= 0; --l) {
        Tensor<T> up = nn::upsample2x(x);
        if (cache != nullptr) cache->up_channels[l] = up.c();
        x = run_block(decoder_[l], nn::concat_channels(up, skips[l]),
                      cache != nullptr ? &cache->decoder[l] : nullptr);
    }
    Tensor<T> logits = head_.forward(x);
    SoftPrediction<T> pred{nn::softmax_channels(logits)};
    if (cache != nullptr) {
        cache->head_input = std::move(x);
        cache->probs = pred.probs;
    }
    return pred;
}

template <typename T>
Tensor<T> UNet<T>::backward(const Cache& cache, const Tensor<T>& dprobs, bool need_input_grad,
                            bool accumulate) {
    Tensor<T> dlogits = nn::softmax_channels_backward(cache.probs, dprobs);
    Tensor<T> dx = head_.backward(cache.head_input, dlogits, true, accumulate);
    std::vector<Tensor<T>> dskips(encoder_.size());
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
        Tensor<T> dcat = back_block(decoder_[l], cache.decoder[l], std::move(dx), true, accumulate);
        Tensor<T> dup;
        nn::split_channels(dcat, cache.up_channels[l], dup, dskips[l]);
        dx = nn::upsample2x_backward(dup);
    }
    dx = back_block(bottleneck_, cache.bottleneck, std::move(dx), true, accumulate);
    for (int l = static_cast<int>(encoder_.size()) - 1; l >= 0; --l) {
        dx = nn::max_pool2x2_backward(dx, cache.pool_argmax[l], cache.pool_shapes[l]);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dskips[l][i];
        dx = back_block(encoder_[l], cache.encoder[l], std::move(dx), l > 0 || need_input_grad,
                        accumulate);
    }
    return need_input_grad ? dx : Tensor<T>{};
}

template <typename T>
nn::ParameterList<T> UNet<T>::parameters() {
    nn::ParameterList<T> out;
    auto add = [&out](Block& b) {
        for (Unit& u : b) {
            out.push_back(&u.conv.weight);
            out.push_back(&u.conv.bias);
            out.push_back(&u.norm.gamma);
            out.push_back(&u.norm.beta);
        }
    };
    for (auto& b : encoder_) add(b);
    add(bottleneck_);
    for (auto& b : decoder_) add(b);
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
}

template <typename T>
std::uint64_t UNet<T>::parameter_hash() const {
    return nn::parameter_hash(const_cast<UNet*>(this)->parameters());
}

template <typename T>
LabelMask predict_mask(const SoftPrediction<T>& pred) {
    const Tensor<T>& p = pred.probs;
    LabelMask mask(p.n(), p.h(), p.w());
    const std::size_t hw = p.plane_size();
    for (int n = 0; n < p.n(); ++n) {
        const T* s = p.sample(n);
        for (std::size_t i = 0; i < hw; ++i) {
            int best = 0;
            for (int k = 1; k < p.c(); ++k) {
                if (s[k * hw + i] > s[best * hw + i]) best = k;
            }
            mask.labels[n * hw + i] = best;
        }
    }
    return mask;
}

template class UNet<float>;
template class UNet<double>;
template LabelMask predict_mask<float>(const SoftPrediction<float>&);
template LabelMask predict_mask<double>(const SoftPrediction<double>&);

}  // namespace advsdg::seg
