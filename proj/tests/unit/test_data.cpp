// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "advsdg/data.hpp"
#include "advsdg/errors.hpp"
#include "oracles.hpp"

using namespace advsdg;
using namespace advsdg::data;

namespace {

Volume volume_of(std::vector<Real> values, Modality m) {
    Volume v(1, 1, static_cast<int>(values.size()), m);
    v.voxels = std::move(values);
    return v;
}

double mean_of(const Image& img) {
    return std::accumulate(img.v.begin(), img.v.end(), 0.0) / static_cast<double>(img.size());
}

double std_of(const Image& img) {
    const double mu = mean_of(img);
    double ss = 0.0;
    for (Real v : img.v) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(img.size()));
}

Image random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(3.0, 2.0);
    Image img(h, w);
    for (auto& v : img.v) v = static_cast<Real>(d(rng));
    return img;
}

}  // namespace

TEST_CASE("clip_ct clamps to the abdominal window") {
    const Volume out = clip_ct(volume_of({-500, 0, 1000, -275, 125}, Modality::kCT));
    CHECK(out.voxels[0] == doctest::Approx(-275));
    CHECK(out.voxels[1] == 0);
    CHECK(out.voxels[2] == doctest::Approx(125));
    CHECK(out.voxels[3] == -275);
    CHECK(out.voxels[4] == 125);
    CHECK(clip_ct(out).voxels == out.voxels);
    CHECK_THROWS_AS((void)clip_ct(volume_of({1, 2}, Modality::kMRI)), ModalityError);
}

TEST_CASE("percentile matches the sort-based oracle") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> size(1, 300);
    std::normal_distribution<double> d(0.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Real> v(static_cast<std::size_t>(size(rng)));
        for (auto& x : v) x = static_cast<Real>(d(rng));
        const std::vector<double> dv(v.begin(), v.end());
        for (double q : {0.0, 12.5, 50.0, 99.5, 100.0}) {
            CHECK(percentile(v, q) == doctest::Approx(testing::percentile_oracle(dv, q)).epsilon(1e-12));
        }
    }
}

TEST_CASE("clip_mri_percentile examples") {
    SUBCASE("outliers capped at the combined 99.5th percentile") {
        std::vector<Real> v(1000, 1.0f);
        for (int i = 0; i < 5; ++i) v.push_back(100.0f);
        const double q = testing::percentile_oracle(std::vector<double>(v.begin(), v.end()), 99.5);
        const Volume out = clip_mri_percentile(volume_of(v, Modality::kMRI));
        for (std::size_t i = 1000; i < out.voxels.size(); ++i) CHECK(out.voxels[i] == doctest::Approx(q));
        for (std::size_t i = 0; i < 1000; ++i) CHECK(out.voxels[i] == 1.0f);
    }
    SUBCASE("constant volume unchanged") {
        const Volume in = volume_of(std::vector<Real>(64, 3.5f), Modality::kMRI);
        CHECK(clip_mri_percentile(in).voxels == in.voxels);
    }
    SUBCASE("ramp 0..999 capped at 994.005") {
        std::vector<Real> v(1000);
        std::iota(v.begin(), v.end(), 0.0f);
        const Volume out = clip_mri_percentile(volume_of(v, Modality::kMRI));
        CHECK(testing::percentile_oracle(std::vector<double>(v.begin(), v.end()), 99.5) == doctest::Approx(994.005));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] <= 994.005f) CHECK(out.voxels[i] == v[i]);
            else CHECK(out.voxels[i] == doctest::Approx(994.005).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS((void)clip_mri_percentile(volume_of({1, 2}, Modality::kCT)), ModalityError);
}

TEST_CASE("resize_axial") {
    SUBCASE("target size equal to input is an identity") {
        Volume v(2, 192, 192, Modality::kCT);
        std::mt19937_64 rng(1);
        std::normal_distribution<double> d;
        for (auto& x : v.voxels) x = static_cast<Real>(d(rng));
        const Volume out = resize_axial(v, 192);
        REQUIRE(out.voxels.size() == v.voxels.size());
        for (std::size_t i = 0; i < v.voxels.size(); ++i) CHECK(out.voxels[i] == doctest::Approx(v.voxels[i]).epsilon(1e-6));
    }
    SUBCASE("constants survive downsampling") {
        const Volume out = resize_axial(Volume(2, 384, 384, Modality::kMRI, 7.25f), 192);
        CHECK(out.h == 192);
        CHECK(out.w == 192);
        CHECK(out.depth == 2);
        for (Real x : out.voxels) CHECK(x == doctest::Approx(7.25));
    }
    SUBCASE("2x2 ramp to 4x4 by hand-evaluated bilinear weights") {
        Image img(2, 2);
        img.at(0, 0) = 0;
        img.at(0, 1) = 1;
        img.at(1, 0) = 0;
        img.at(1, 1) = 1;
        const Image out = resize_bilinear(img, 4, 4);
        // Half-pixel centers: x_src = (x + 0.5) / 2 - 0.5 -> -0.25, 0.25, 0.75, 1.25, clamped.
        const double expected[4] = {0.0, 0.25, 0.75, 1.0};
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(out.at(y, x) == doctest::Approx(expected[x]));
    }
    SUBCASE("labels use nearest neighbour") {
        LabelVolume lv{1, 4, 4, std::vector<std::int32_t>(16, 0)};
        lv.labels[5] = 2;
        const LabelVolume out = resize_axial(lv, 8);
        std::set<std::int32_t> seen(out.labels.begin(), out.labels.end());
        CHECK(seen == std::set<std::int32_t>{0, 2});
    }
}

TEST_CASE("resize round trip of a smooth image stays within 5% relative L2") {
    Image img(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) img.at(y, x) = static_cast<Real>(std::sin(y * 0.1) + std::cos(x * 0.07) + 3.0);
    const Image back = resize_bilinear(resize_bilinear(img, 96, 96), 64, 64);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        num += (back.v[i] - img.v[i]) * (back.v[i] - img.v[i]);
        den += img.v[i] * img.v[i];
    }
    CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("normalize_zscore") {
    Image two(1, 2);
    two.v = {1, 3};
    const Image z = normalize_zscore(two);
    CHECK(z.v[0] == doctest::Approx(-1));
    CHECK(z.v[1] == doctest::Approx(1));

    const Image r = normalize_zscore(random_image(32, 32, 3));
    CHECK(std::abs(mean_of(r)) < 1e-5);
    CHECK(std::abs(std_of(r) - 1.0) < 1e-5);
    const Image again = normalize_zscore(r);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(again.v[i] == doctest::Approx(r.v[i]).epsilon(1e-5));

    const Image flat = normalize_zscore(Image(4, 4, 2.5f));
    for (Real v : flat.v) CHECK(v == 0.0f);
}

TEST_CASE("augment") {
    auto samples = make_toy_dataset(2, TextureFamily::kNoisy, 11, {32, true});
    const Sample& s = samples[1];

    SUBCASE("all probabilities zero reduces to z-scoring") {
        AugmentOptions none;
        none.p_gamma = none.p_noise = none.p_affine = none.p_elastic = 0.0;
        Rng rng(5);
        const Sample out = augment(s, none, rng);
        CHECK(out.image == normalize_zscore(s.image));
        CHECK(out.mask == s.mask);
    }
    SUBCASE("gamma 1 is an identity contrast") {
        AugmentOptions g;
        g.p_noise = g.p_affine = g.p_elastic = 0.0;
        g.p_gamma = 1.0;
        g.gamma_min = g.gamma_max = 1.0;
        Rng rng(5);
        const Sample out = augment(s, g, rng);
        const Image ref = normalize_zscore(s.image);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.image.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-4));
    }
    SUBCASE("fixed seed gives bit-identical output; labels only shrink") {
        AugmentOptions all;
        all.p_gamma = all.p_noise = all.p_affine = all.p_elastic = 1.0;
        const std::set<std::int32_t> before(s.mask.v.begin(), s.mask.v.end());
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng a(seed), b(seed);
            const Sample x = augment(s, all, a);
            const Sample y = augment(s, all, b);
            CHECK(x.image == y.image);
            CHECK(x.mask == y.mask);
            for (auto v : x.mask.v) CHECK(before.contains(v));
            CHECK(std::abs(mean_of(x.image)) < 1e-4);
        }
    }
}

TEST_CASE("random_crop") {
    auto samples = make_toy_dataset(1, TextureFamily::kFlat, 2, {32, true});
    Rng rng(1);
    const Sample c = random_crop(samples[0], 16, rng);
    CHECK(c.image.h == 16);
    CHECK(c.mask.w == 16);
    CHECK_THROWS_AS((void)random_crop(samples[0], 33, rng), ValueError);
}

TEST_CASE("make_toy_dataset") {
    const ToyOptions opts;
    const auto a = make_toy_dataset(1, TextureFamily::kFlat, 0, opts);
    const auto b = make_toy_dataset(1, TextureFamily::kFlat, 0, opts);
    CHECK(a[0].image == b[0].image);
    CHECK(a[0].mask == b[0].mask);
    CHECK(a[0].image.h == 96);
    CHECK(a[0].image.w == 96);

    const auto flat = make_toy_dataset(20, TextureFamily::kFlat, 3, opts);
    for (auto fam : {TextureFamily::kStriped, TextureFamily::kNoisy, TextureFamily::kGradient, TextureFamily::kInverted}) {
        const auto other = make_toy_dataset(20, fam, 3, opts);
        for (std::size_t i = 0; i < flat.size(); ++i) {
            CHECK(flat[i].mask == other[i].mask);
            CHECK_FALSE(flat[i].image == other[i].image);
        }
    }

    const auto hundred = make_toy_dataset(100, TextureFamily::kStriped, 9, opts);
    int with_fg = 0;
    for (const auto& s : hundred) {
        bool fg = false;
        for (auto v : s.mask.v) {
            CHECK(v >= 0);
            CHECK(v < toy_num_classes(opts));
            fg = fg || v > 0;
        }
        with_fg += fg;
    }
    CHECK(with_fg >= 95);

    ToyOptions binary;
    binary.label_by_kind = false;
    CHECK(toy_num_classes(binary) == 2);
    CHECK(toy_label_names(binary).size() == 2);
    CHECK(parse_texture_family("inverted-contrast") == TextureFamily::kInverted);
    CHECK_THROWS_AS((void)parse_texture_family("plaid"), ValueError);
}

TEST_CASE("split_source") {
    const auto samples = make_toy_dataset(10, TextureFamily::kFlat, 4, {16, true});
    const DatasetSplit s = split_source(samples, 0.7, 42);
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 3);
    const DatasetSplit t = split_source(samples, 0.7, 42);
    for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].image == t.train[i].image);
    for (const auto& v : s.val)
        for (const auto& tr : s.train) CHECK_FALSE(v.image == tr.image);
    CHECK_THROWS_AS((void)split_source(samples, 1.0, 42), ValueError);
    CHECK_THROWS_AS((void)split_source({samples[0]}, 0.7, 42), ValueError);

    SUBCASE("volumes never straddle the split") {
        std::vector<Sample> slices;
        for (int v = 0; v < 10; ++v)
            for (int z = 0; z < 3; ++z) {
                Sample x = samples[static_cast<std::size_t>(v)];
                x.volume_id = "vol" + std::to_string(v);
                slices.push_back(x);
            }
        const DatasetSplit vs = split_source(slices, 0.7, 1);
        CHECK(vs.train.size() == 21);
        CHECK(vs.val.size() == 9);
        std::set<std::string> train_ids;
        for (const auto& x : vs.train) train_ids.insert(x.volume_id);
        for (const auto& x : vs.val) CHECK_FALSE(train_ids.contains(x.volume_id));
    }
}

TEST_CASE("slice_volume keeps the volume id") {
    Volume v(3, 4, 4, Modality::kCT, 1.0f);
    LabelVolume l{3, 4, 4, std::vector<std::int32_t>(48, 1)};
    const auto s = slice_volume(v, l, "ct", "case7");
    REQUIRE(s.size() == 3);
    for (const auto& x : s) {
        CHECK(x.volume_id == "case7");
        CHECK(x.domain_tag == "ct");
        CHECK(x.image.h == 4);
    }
}
