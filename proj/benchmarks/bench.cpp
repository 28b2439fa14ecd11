// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "advsdg/config.hpp"
#include "advsdg/data.hpp"
#include "advsdg/mi_regularizer.hpp"
#include "advsdg/nn.hpp"
#include "advsdg/segmenter.hpp"
#include "advsdg/synthesizer.hpp"
#include "advsdg/trainer.hpp"

using namespace advsdg;

namespace {

Tensor<Real> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> g;
    Tensor<Real> t(n, c, h, w);
    for (auto& v : t.values()) v = g(rng);
    return t;
}

// Args: channels in/out, spatial side.
void BM_Conv3x3Forward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int side = static_cast<int>(state.range(1));
    nn::Conv2d<Real> conv("c", c, c, 3);
    Rng init(11);
    conv.init_kaiming(init, 0.01);
    const Tensor<Real> x = random_tensor(4, c, side, side, 1);
    for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
    state.SetItemsProcessed(state.iterations() * 4LL * c * c * 9 * side * side);
}
BENCHMARK(BM_Conv3x3Forward)->Args({4, 32})->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_Conv3x3Backward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int side = static_cast<int>(state.range(1));
    nn::Conv2d<Real> conv("c", c, c, 3);
    Rng init(12);
    conv.init_kaiming(init, 0.01);
    const Tensor<Real> x = random_tensor(4, c, side, side, 2);
    const Tensor<Real> dy = random_tensor(4, c, side, side, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv.backward(x, dy, true, true));
}
BENCHMARK(BM_Conv3x3Backward)->Args({4, 32})->Args({16, 64})->Args({32, 32});

void BM_SegmenterForward(benchmark::State& state) {
    seg::SegmenterOptions o;
    o.base_width = static_cast<int>(state.range(0));
    Rng init(4);
    const seg::UNet<Real> net(o, init);
    const Tensor<Real> x = random_tensor(4, 1, 64, 64, 5);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_SegmenterForward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Synthesize(benchmark::State& state) {
    Rng init(6);
    const synth::Synthesizer<Real> t(synth::SynthesizerOptions{}, init);
    const int side = static_cast<int>(state.range(0));
    const Tensor<Real> x = random_tensor(4, 1, side, side, 7);
    Rng zr(8);
    const auto z = synth::sample_style(zr, t.style_channels());
    const std::vector<synth::MixRatio> alpha{synth::MixRatio(0.5)};
    for (auto _ : state) benchmark::DoNotOptimize(t.forward(x, z, alpha));
}
BENCHMARK(BM_Synthesize)->Arg(64)->Arg(192);

void BM_ContrastiveLossGrad(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    Matrix<double> a(p, 128), b(p, 128);
    for (auto* m : {&a, &b}) {
        for (int r = 0; r < p; ++r) {
            double n = 0.0;
            for (double& v : m->row(r)) {
                v = g(rng);
                n += v * v;
            }
            for (double& v : m->row(r)) v /= std::sqrt(n);
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(mi::contrastive_mi_loss_grad(a, b, 0.07));
}
BENCHMARK(BM_ContrastiveLossGrad)->Arg(16)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
    TrainConfig cfg;
    cfg.mode = static_cast<Mode>(state.range(0));
    cfg.segmenter.base_width = 4;
    cfg.segmenter.stages = 3;
    cfg.segmenter.convs_per_stage = 1;
    cfg.encoder.widths = {8, 16, 32};
    cfg.encoder.embed_dim = 32;
    cfg.patches = 16;
    data::ToyOptions o;
    o.size = 32;
    o.label_by_kind = false;
    auto samples = data::make_toy_dataset(4, data::TextureFamily::kFlat, 10, o);
    for (auto& s : samples) s.image = data::normalize_zscore(s.image);
    const Batch batch = make_batch(samples);
    Trainer t(cfg, 2, 32, 32);
    t.set_total_steps(1 << 30);
    for (auto _ : state) benchmark::DoNotOptimize(t.train_step(batch));
    state.SetLabel(std::string(to_string(cfg.mode)));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Mode::kFull))
    ->Arg(static_cast<int>(Mode::kNoMi))
    ->Arg(static_cast<int>(Mode::kNoAdversarial))
    ->Arg(static_cast<int>(Mode::kErm))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
