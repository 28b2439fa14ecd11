// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advsdg/mi_regularizer.hpp"
#include "advsdg/nn.hpp"
#include "oracles.hpp"

using namespace advsdg;
using namespace advsdg::mi;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows random_unit_rows(int p, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Rows out(static_cast<std::size_t>(p), std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& r : out) {
        double n = 0.0;
        for (auto& v : r) {
            v = g(rng);
            n += v * v;
        }
        for (auto& v : r) v /= std::sqrt(n);
    }
    return out;
}

Matrix<double> to_matrix(const Rows& rows) {
    Matrix<double> m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    return m;
}

}  // namespace

TEST_CASE("contrastive loss equals the double-loop oracle") {
    std::mt19937_64 rng(99);
    for (int p : {2, 3, 8}) {
        for (double tau : {0.07, 0.5, 1.0}) {
            const Rows src = random_unit_rows(p, 16, rng);
            const Rows syn = random_unit_rows(p, 16, rng);
            const double got = contrastive_mi_loss(to_matrix(src), to_matrix(syn), tau);
            CHECK(got == doctest::Approx(testing::contrastive_oracle(syn, src, syn, tau)).epsilon(1e-6));
            CHECK(got <= 0.0);
            // The oracle is shift invariant in its logits; so must the library value be.
            CHECK(got == doctest::Approx(testing::contrastive_oracle(syn, src, syn, tau, 3.7)).epsilon(1e-6));
            const double literal = contrastive_mi_loss(to_matrix(src), to_matrix(syn), tau, NegativeForm::kSourceVsSource);
            CHECK(literal == doctest::Approx(testing::contrastive_oracle(syn, src, src, tau)).epsilon(1e-6));
        }
    }
}

TEST_CASE("one orthogonal negative gives log(e / (e + 1))") {
    Matrix<double> src(2, 2), syn(2, 2);
    src(0, 0) = 1;
    src(1, 1) = 1;
    syn(0, 0) = 1;
    syn(1, 1) = 1;
    const double expected = std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(expected == doctest::Approx(-0.31326).epsilon(1e-5));
    CHECK(std::abs(contrastive_mi_loss(src, syn, 1.0) - expected) < 1e-5);
    // Perfect alignment at small tau approaches zero from below.
    const double sharp = contrastive_mi_loss(src, syn, 0.01);
    CHECK(sharp <= 0.0);
    CHECK(sharp > -1e-6);
}

TEST_CASE("contrastive loss input checks and permutation invariance") {
    std::mt19937_64 rng(5);
    const Rows src = random_unit_rows(6, 8, rng);
    const Rows syn = random_unit_rows(6, 8, rng);
    Rows ps = src, py = syn;
    const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    for (std::size_t i = 0; i < perm.size(); ++i) {
        ps[i] = src[static_cast<std::size_t>(perm[i])];
        py[i] = syn[static_cast<std::size_t>(perm[i])];
    }
    CHECK(contrastive_mi_loss(to_matrix(ps), to_matrix(py), 0.2) ==
          doctest::Approx(contrastive_mi_loss(to_matrix(src), to_matrix(syn), 0.2)).epsilon(1e-12));

    Matrix<double> bad = to_matrix(src);
    bad(0, 0) += 0.1;
    CHECK_THROWS_AS((void)contrastive_mi_loss(bad, to_matrix(syn), 0.2), ValueError);
    CHECK_THROWS_AS((void)contrastive_mi_loss(to_matrix(src), to_matrix(syn), 0.0), ValueError);
    const Rows one = random_unit_rows(1, 8, rng);
    CHECK_THROWS_AS((void)contrastive_mi_loss(to_matrix(one), to_matrix(one), 0.2), ValueError);
}

TEST_CASE("contrastive gradient matches central differences") {
    std::mt19937_64 rng(12);
    for (auto form : {NegativeForm::kQueryVsSource, NegativeForm::kSourceVsSource}) {
        const Matrix<double> src = to_matrix(random_unit_rows(4, 8, rng));
        Matrix<double> syn = to_matrix(random_unit_rows(4, 8, rng));
        Matrix<double> s2 = src;
        const ContrastiveResult res = contrastive_mi_loss_grad(src, syn, 1.0, form);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 8; ++c) {
                const double num = testing::central_difference(
                    &syn(r, c), [&] { return contrastive_mi_loss(src, syn, 1.0, form); }, 1e-7);
                CHECK(testing::rel_error(res.d_synth(r, c), num, 1e-8) < 1e-4);
                const double num_src = testing::central_difference(
                    &s2(r, c), [&] { return contrastive_mi_loss(s2, syn, 1.0, form); }, 1e-7);
                CHECK(testing::rel_error(res.d_source(r, c), num_src, 1e-8) < 1e-4);
            }
        }
    }
}

TEST_CASE("sample_patch_locations") {
    Rng rng(1);
    const PatchLocations all = sample_patch_locations(4, 5, 20, rng);
    std::vector<std::pair<int, int>> cells = all.cells;
    std::sort(cells.begin(), cells.end());
    CHECK(std::adjacent_find(cells.begin(), cells.end()) == cells.end());
    CHECK(cells.size() == 20);

    Rng a(7), b(7);
    CHECK(sample_patch_locations(8, 8, 10, a) == sample_patch_locations(8, 8, 10, b));
    CHECK_THROWS_AS((void)sample_patch_locations(2, 2, 5, rng), ValueError);

    std::vector<int> freq(64, 0);
    Rng u(3);
    for (int i = 0; i < 10000; ++i) {
        const auto loc = sample_patch_locations(8, 8, 1, u);
        ++freq[static_cast<std::size_t>(loc.cells[0].first * 8 + loc.cells[0].second)];
    }
    for (int f : freq) {
        CHECK(f > 106);
        CHECK(f < 206);
    }
}

TEST_CASE("patch encoder") {
    PatchEncoderOptions opts;
    opts.widths = {4, 8, 8};
    opts.embed_dim = 16;
    Rng init(2);
    PatchEncoder<double> enc(opts, init);
    std::mt19937_64 rng(4);
    Tensor<double> x(2, 1, 32, 32);
    testing::fill_normal(x, rng);
    const auto [fh, fw] = enc.feature_extent(32, 32);
    CHECK(fh == 4);
    CHECK(fw == 4);
    Rng lr(1);
    const PatchLocations loc = sample_patch_locations(fh, fw, 6, lr);
    const auto feats = enc.forward(x, loc);
    REQUIRE(feats.size() == 2);
    for (const auto& f : feats) {
        CHECK(f.rows() == 6);
        CHECK(f.cols() == 16);
        for (int r = 0; r < f.rows(); ++r) {
            double n = 0.0;
            for (double v : f.row(r)) n += v * v;
            CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
    CHECK(enc.forward(x, loc) == feats);

    PatchLocations rev = loc;
    std::reverse(rev.cells.begin(), rev.cells.end());
    const auto rf = enc.forward(x, rev);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 16; ++c) CHECK(rf[0](r, c) == feats[0](5 - r, c));

    PatchLocations oob = loc;
    oob.cells[0] = {fh, 0};
    CHECK_THROWS_AS((void)enc.forward(x, oob), ValueError);

    const Grid<double> sim = enc.similarity_map(x, {1, 2}, x);
    CHECK(sim.h == fh);
    CHECK(sim.at(1, 2) == doctest::Approx(1.0));

    SUBCASE("gradients through the encoder") {
        Tensor<double> one(1, 1, 16, 16);
        testing::fill_normal(one, rng);
        const auto [h1, w1] = enc.feature_extent(16, 16);
        Rng r2(9);
        const PatchLocations l1 = sample_patch_locations(h1, w1, 3, r2);
        Matrix<double> weights(3, 16);
        for (std::size_t i = 0; i < weights.size(); ++i) weights.data()[i] = std::sin(0.37 * static_cast<double>(i));
        auto objective = [&] {
            const auto f = enc.forward(one, l1).front();
            double s = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) s += f.data()[i] * weights.data()[i];
            return s;
        };
        typename PatchEncoder<double>::Cache cache;
        (void)enc.forward(one, l1, &cache);
        nn::zero_grad(enc.parameters());
        const Tensor<double> dx = enc.backward(cache, {weights}, true);
        for (auto* p : enc.parameters()) {
            for (std::size_t i = 0; i < p->value.size(); i += 5) {
                const double num = testing::central_difference(&p->value[i], objective);
                CAPTURE(p->name);
                CHECK(testing::rel_error(p->grad[i], num, 1e-7) < 1e-4);
            }
        }
        for (std::size_t i = 0; i < one.size(); i += 9) {
            const double num = testing::central_difference(&one[i], objective);
            CHECK(testing::rel_error(dx[i], num, 1e-7) < 1e-4);
        }
    }
}
