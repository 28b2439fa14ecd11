// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstdint>
#include <vector>

#include "advsdg/nn.hpp"
#include "advsdg/random.hpp"
#include "advsdg/tensor.hpp"

namespace advsdg::seg {

struct SegmenterOptions {
    int image_channels = 1;
    int classes = 2;
    /// Number of 2x downsamplings; input extents must be divisible by 2^stages.
    int stages = 4;
    int base_width = 16;
    int convs_per_stage = 2;
    double leaky_slope = 0.01;
};

/// Small UNet: conv/instance-norm/LeakyReLU units, max-pool down, nearest
/// upsampling with skip concatenation, 1x1 head and channel softmax.
template <typename T>
class UNet {
public:
    struct UnitCache {
        Tensor<T> input;
        typename nn::InstanceNorm<T>::Cache norm;
        Tensor<T> normalized;
    };
    struct Cache {
        std::vector<std::vector<UnitCache>> encoder;  // per level, per unit
        std::vector<std::vector<std::uint32_t>> pool_argmax;
        std::vector<std::array<int, 4>> pool_shapes;
        std::vector<UnitCache> bottleneck;
        std::vector<std::vector<UnitCache>> decoder;  // indexed by level
        std::vector<int> up_channels;
        Tensor<T> head_input;
        Tensor<T> probs;
    };

    UNet() = default;
    UNet(const SegmenterOptions& options, Rng& init_rng);

    [[nodiscard]] SoftPrediction<T> forward(const Tensor<T>& image, Cache* cache = nullptr) const;

    /// Back-propagates dL/dprobs. Parameter gradients are accumulated when
    /// `accumulate` is set; dL/dimage is returned when requested.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& dprobs, bool need_input_grad,
                       bool accumulate = true);

    [[nodiscard]] nn::ParameterList<T> parameters();
    [[nodiscard]] std::uint64_t parameter_hash() const;
    [[nodiscard]] const SegmenterOptions& options() const noexcept { return options_; }
    /// Required divisor of the input height and width.
    [[nodiscard]] int spatial_divisor() const noexcept { return 1 << options_.stages; }

private:
    struct Unit {
        nn::Conv2d<T> conv;
        nn::InstanceNorm<T> norm;
    };
    using Block = std::vector<Unit>;

    Block make_block(const std::string& name, int in, int out, Rng& rng) const;
    Tensor<T> run_block(const Block& block, Tensor<T> x, std::vector<UnitCache>* cache) const;
    Tensor<T> back_block(Block& block, const std::vector<UnitCache>& cache, Tensor<T> dy,
                         bool need_dx, bool accumulate);

    SegmenterOptions options_;
    std::vector<Block> encoder_;
    Block bottleneck_;
    std::vector<Block> decoder_;
    nn::Conv2d<T> head_;
};

/// Contract for a segmentation backbone usable by the trainer.
template <typename B, typename T>
concept Backbone = requires(B b, const B cb, const Tensor<T>& x, typename B::Cache* cache,
                            const typename B::Cache& ccache, const Tensor<T>& d) {
    { cb.forward(x, cache) } -> std::same_as<SoftPrediction<T>>;
    { b.backward(ccache, d, true, true) } -> std::same_as<Tensor<T>>;
    { b.parameters() } -> std::same_as<nn::ParameterList<T>>;
    { cb.parameter_hash() } -> std::same_as<std::uint64_t>;
};

static_assert(Backbone<UNet<float>, float>);

template <typename T>
using Segmenter = UNet<T>;

/// Per-pixel argmax; ties resolve to the lowest class index.
template <typename T>
[[nodiscard]] LabelMask predict_mask(const SoftPrediction<T>& pred);

}  // namespace advsdg::seg
