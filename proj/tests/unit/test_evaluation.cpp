// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "advsdg/evaluation.hpp"
#include "advsdg/trainer.hpp"
#include "oracles.hpp"

using namespace advsdg;
using namespace advsdg::eval;

namespace {

Mask mask_of(int h, int w, std::initializer_list<std::int32_t> v) {
    Mask m(h, w);
    std::copy(v.begin(), v.end(), m.v.begin());
    return m;
}

data::Sample labelled(const Mask& gt, std::string volume = {}) {
    data::Sample s;
    s.image = Image(gt.h, gt.w);
    s.mask = gt;
    s.volume_id = std::move(volume);
    return s;
}

TrainConfig tiny_config(Mode mode) {
    TrainConfig c;
    c.mode = mode;
    c.epochs = 1;
    c.batch_size = 4;
    c.segmenter.stages = 2;
    c.segmenter.base_width = 4;
    c.segmenter.convs_per_stage = 1;
    c.encoder.widths = {4, 8, 8};
    c.encoder.embed_dim = 16;
    c.patches = 8;
    c.augment = false;
    return c;
}

std::vector<data::Sample> toy(int n, data::TextureFamily family, std::uint64_t seed) {
    data::ToyOptions o;
    o.size = 32;
    o.label_by_kind = false;
    auto s = data::make_toy_dataset(n, family, seed, o);
    for (auto& x : s) x.image = data::normalize_zscore(x.image);
    return s;
}

}  // namespace

TEST_CASE("Dice agrees with the set oracle on random masks") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> label(0, 2);
    for (int i = 0; i < 1000; ++i) {
        Mask p(8, 8), g(8, 8);
        for (auto& v : p.v) v = label(rng);
        for (auto& v : g.v) v = label(rng);
        for (int k = 0; k < 3; ++k) {
            const double got = dice_score(p, g, k);
            CHECK(got == doctest::Approx(testing::dice_oracle(p.v, g.v, k)).epsilon(1e-12));
            CHECK(got == dice_score(g, p, k));
            CHECK(got >= 0.0);
            CHECK(got <= 1.0);
        }
    }
}

TEST_CASE("Dice worked examples") {
    const Mask p = mask_of(2, 2, {1, 1, 0, 0});
    const Mask g = mask_of(2, 2, {1, 0, 1, 0});
    CHECK(dice_score(p, g, 1) == doctest::Approx(0.5));
    CHECK(dice_score(p, p, 1) == 1.0);
    CHECK(dice_score(p, mask_of(2, 2, {0, 0, 1, 1}), 1) == 0.0);
    const Mask empty(2, 2);
    CHECK(dice_score(empty, empty, 1) == 1.0);
    CHECK(std::isnan(dice_score(empty, empty, 1, EmptyDice::kSkip)));

    LabelMask lp(1, 2, 2), lg(1, 2, 2);
    lp.labels = p.v;
    lg.labels = g.v;
    CHECK(dice_score(lp, lg, 1) == doctest::Approx(0.5));
}

TEST_CASE("per-class Dice stacks slices of one volume") {
    const Mask gt_a = mask_of(2, 2, {1, 1, 0, 0});
    const Mask gt_b = mask_of(2, 2, {0, 0, 1, 1});
    const std::vector<Mask> preds = {gt_a, Mask(2, 2)};

    // Separate slices: 1 and 0, mean 0.5. One volume: 2*2 / (2 + 4).
    const auto sliced = per_class_dice(preds, {labelled(gt_a), labelled(gt_b)}, 2);
    CHECK(sliced.at(0) == doctest::Approx(0.5));
    const auto stacked = per_class_dice(preds, {labelled(gt_a, "v"), labelled(gt_b, "v")}, 2);
    CHECK(stacked.at(0) == doctest::Approx(4.0 / 6.0));

    // An absent class is skipped under kSkip instead of scoring 1.
    const auto three = per_class_dice({gt_a}, {labelled(gt_a)}, 3, EmptyDice::kSkip);
    CHECK(three.at(0) == 1.0);
    CHECK(std::isnan(three.at(1)));
    CHECK(per_class_dice({gt_a}, {labelled(gt_a)}, 3).at(1) == 1.0);
}

TEST_CASE("ResultsTable") {
    ResultsTable t({"striped", "noisy"}, {"disk", "ellipse"});
    t.add_row("FULL", {{80.0, 60.0}, {50.0, 70.0}});
    t.add_row("ERM", {{40.0, 20.0}, {10.0, 30.0}}, {{1.0, 2.0}, {0.5, 0.25}});
    t.seeds = {0, 1, 2};
    t.config_hash = 0x1234abcdULL;
    CHECK(t.column_count() == 7);
    CHECK(t.column_names().front() == "striped/disk");
    CHECK(t.column_names().back() == "average");
    CHECK(t.row("FULL").values.at(2) == doctest::Approx(70.0));
    CHECK(t.average("FULL") == doctest::Approx(65.0));
    CHECK(t.average("ERM") == doctest::Approx(25.0));
    CHECK(t.averages_consistent());
    CHECK_THROWS((void)t.row("GIN"));

    const ResultsTable back = ResultsTable::parse_tsv(t.to_tsv());
    CHECK(back == t);
    CHECK(back.seeds == t.seeds);
    CHECK(back.config_hash == t.config_hash);
    CHECK(back.to_tsv() == t.to_tsv());
    CHECK(t.to_text().find("ERM") != std::string::npos);

    const auto path = std::filesystem::temp_directory_path() / "advsdg_results_test.tsv";
    t.write_tsv(path);
    CHECK(ResultsTable::read_tsv(path) == t);
    std::filesystem::remove(path);

    // Hand-edited cells no longer match their averages.
    auto text = t.to_tsv();
    const auto pos = text.find("\t70");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 3, "\t71");
    CHECK_FALSE(ResultsTable::parse_tsv(text).averages_consistent());
}

TEST_CASE("evaluate_cross_domain") {
    Trainer t(tiny_config(Mode::kErm), 2, 32, 32);
    const Checkpoint ckpt = t.snapshot(0.0);
    const std::vector<Domain> domains = {{"striped", toy(3, data::TextureFamily::kStriped, 1), 2},
                                         {"noisy", toy(3, data::TextureFamily::kNoisy, 1), 2}};
    const ResultsTable a = evaluate_cross_domain(ckpt, domains, {"background", "shape"});
    CHECK(a == evaluate_cross_domain(ckpt, domains, {"background", "shape"}));
    CHECK(a.rows().size() == 1);
    CHECK(a.rows().front().method == "ERM");
    CHECK(a.column_names().front() == "striped/shape");
    CHECK(a.averages_consistent());

    CHECK_THROWS_AS((void)evaluate_cross_domain(ckpt, {}), ValueError);
    std::vector<Domain> wrong = domains;
    wrong[1].num_classes = 4;
    CHECK_THROWS_AS((void)evaluate_cross_domain(ckpt, wrong), ValueError);
}

TEST_CASE("run_ablation") {
    const data::DatasetSplit split = data::split_source(toy(8, data::TextureFamily::kFlat, 2), 0.5, 0);
    const std::vector<Domain> targets = {{"striped", toy(2, data::TextureFamily::kStriped, 3), 2}};
    AblationOptions opts;
    opts.modes = {Mode::kErm, Mode::kErm};
    opts.seeds = {0};
    opts.workers = 1;
    int runs = 0;
    opts.on_run = [&](Mode, std::uint64_t, const ResultsTable&) { ++runs; };
    const ResultsTable t = run_ablation(tiny_config(Mode::kFull), split, 2, targets, opts);
    CHECK(runs == 2);
    REQUIRE(t.rows().size() == 2);
    CHECK(t.rows()[0].values == t.rows()[1].values);
    CHECK(t.averages_consistent());
}

TEST_CASE("a segmenter that fits its data scores high Dice") {
    const auto samples = toy(4, data::TextureFamily::kFlat, 9);
    TrainConfig cfg = tiny_config(Mode::kErm);
    cfg.lr = 1e-2;
    cfg.lr_linear_decay = false;
    Trainer t(cfg, 2, 32, 32);
    const Batch batch = make_batch(samples);
    for (int i = 0; i < 150; ++i) (void)t.train_step(batch);
    CHECK(mean_foreground_dice(t.segmenter(), samples, 2) > 0.95);
}
