// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "advsdg/checkpoint.hpp"
#include "advsdg/data.hpp"
#include "advsdg/evaluation.hpp"
#include "advsdg/trainer.hpp"

using namespace advsdg;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(Mode mode) {
    TrainConfig c;
    c.mode = mode;
    c.epochs = 2;
    c.batch_size = 4;
    c.seed = 3;
    c.segmenter.stages = 2;
    c.segmenter.base_width = 4;
    c.segmenter.convs_per_stage = 1;
    c.encoder.widths = {4, 8, 8};
    c.encoder.embed_dim = 16;
    c.patches = 8;
    c.toy.size = 32;
    c.toy.label_by_kind = false;
    c.augment = false;
    return c;
}

std::vector<data::Sample> toy(int n, std::uint64_t seed) {
    data::ToyOptions o;
    o.size = 32;
    o.label_by_kind = false;
    auto s = data::make_toy_dataset(n, data::TextureFamily::kFlat, seed, o);
    for (auto& x : s) x.image = data::normalize_zscore(x.image);
    return s;
}

Batch toy_batch() { return make_batch(toy(4, 11)); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("advsdg_trainer_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("each step updates only its own parameter groups") {
    const Batch batch = toy_batch();
    for (Mode mode : {Mode::kFull, Mode::kNoMi, Mode::kNoAdversarial, Mode::kErm, Mode::kCutout, Mode::kGin}) {
        CAPTURE(to_string(mode));
        Trainer t(tiny_config(mode), 2, 32, 32);
        const auto h0 = t.hashes();
        (void)t.train_step_segmenter(batch);
        const auto h1 = t.hashes();
        CHECK(h1.segmenter != h0.segmenter);
        CHECK(h1.synth1 == h0.synth1);
        CHECK(h1.synth2 == h0.synth2);
        CHECK(h1.encoder == h0.encoder);

        const loss::LossReport adv = t.train_step_adversary(batch);
        const auto h2 = t.hashes();
        CHECK(h2.segmenter == h1.segmenter);
        const bool adversarial = mode == Mode::kFull || mode == Mode::kNoMi;
        CHECK((h2.synth1 != h1.synth1) == adversarial);
        CHECK((h2.synth2 != h1.synth2) == adversarial);
        CHECK((h2.encoder != h1.encoder) == (mode == Mode::kFull));
        if (mode != Mode::kFull) {
            CHECK(adv.mi_1 == 0.0);
            CHECK(adv.mi_2 == 0.0);
        }
        if (!adversarial) CHECK(adv == loss::LossReport{});
    }
}

TEST_CASE("inactive loss terms report zero") {
    const Batch batch = toy_batch();
    for (Mode mode : {Mode::kErm, Mode::kCutout}) {
        Trainer t(tiny_config(mode), 2, 32, 32);
        const loss::LossReport r = t.train_step(batch);
        CHECK(r.cons == 0.0);
        CHECK(r.mi_1 == 0.0);
        CHECK(r.mi_2 == 0.0);
        CHECK(r.sup_1 == r.sup_2);
    }
    Trainer full(tiny_config(Mode::kFull), 2, 32, 32);
    const loss::LossReport r = full.train_step(batch);
    CHECK(r.mi_1 < 0.0);
    CHECK(r.mi_2 < 0.0);
    CHECK(r.cons >= 0.0);
}

TEST_CASE("loss evaluation with a frozen segmenter is repeatable") {
    const Batch batch = toy_batch();
    Trainer t(tiny_config(Mode::kFull), 2, 32, 32);
    const auto seg_hash = t.hashes().segmenter;
    const loss::LossReport a = t.evaluate_losses(batch);
    const loss::LossReport b = t.evaluate_losses(batch);
    CHECK(a == b);
    (void)t.train_step_adversary(batch);
    CHECK(t.hashes().segmenter == seg_hash);
    // The synthesizers moved, so the views changed; the draws did not.
    const loss::LossReport c = t.evaluate_losses(batch);
    CHECK(c.sup_1 != a.sup_1);
}

TEST_CASE("the adversary step ascends consistency plus MI on its own draws") {
    const Batch batch = toy_batch();
    TrainConfig cfg = tiny_config(Mode::kFull);
    cfg.lr = 1e-3;
    Trainer t(cfg, 2, 32, 32);
    t.set_total_steps(1000);
    const loss::LossReport before = t.evaluate_losses(batch);
    for (int i = 0; i < 5; ++i) (void)t.train_step_adversary(batch);
    const loss::LossReport after = t.evaluate_losses(batch);
    const double w = cfg.w_cons, m = cfg.w_mi;
    CHECK(w * after.cons + m * (after.mi_1 + after.mi_2) > w * before.cons + m * (before.mi_1 + before.mi_2));
}

TEST_CASE("segmenter overfits one batch") {
    const Batch batch = toy_batch();
    TrainConfig cfg = tiny_config(Mode::kErm);
    cfg.lr = 1e-2;
    cfg.lr_linear_decay = false;
    Trainer t(cfg, 2, 32, 32);
    const double first = t.train_step_segmenter(batch).sup_1;
    double last = first;
    for (int i = 1; i < 50; ++i) last = t.train_step_segmenter(batch).sup_1;
    CHECK(last < 0.1 * first);
}

TEST_CASE("learning-rate schedule") {
    TrainConfig cfg = tiny_config(Mode::kErm);
    cfg.lr = 1e-3;
    Trainer t(cfg, 2, 32, 32);
    t.set_total_steps(100);
    CHECK(t.learning_rate(0) == doctest::Approx(1e-3));
    CHECK(t.learning_rate(50) == doctest::Approx(5e-4));
    CHECK(t.learning_rate(100) == 0.0);
    cfg.lr_linear_decay = false;
    Trainer flat(cfg, 2, 32, 32);
    flat.set_total_steps(100);
    CHECK(flat.learning_rate(50) == doctest::Approx(1e-3));
}

TEST_CASE("training is deterministic") {
    const Batch batch = toy_batch();
    Trainer a(tiny_config(Mode::kFull), 2, 32, 32);
    Trainer b(tiny_config(Mode::kFull), 2, 32, 32);
    CHECK(a.hashes() == b.hashes());
    for (int i = 0; i < 3; ++i) CHECK(a.train_step(batch) == b.train_step(batch));
    CHECK(a.hashes() == b.hashes());
    CHECK(a.step() == 3);

    TrainConfig other = tiny_config(Mode::kFull);
    other.seed = 4;
    Trainer c(other, 2, 32, 32);
    CHECK(c.hashes().segmenter != a.hashes().segmenter);
}

TEST_CASE("select_checkpoint") {
    std::vector<Checkpoint> cs(3);
    cs[0].step = 1;
    cs[0].val_dice = 0.5;
    cs[1].step = 2;
    cs[1].val_dice = 0.7;
    cs[2].step = 3;
    cs[2].val_dice = 0.7;
    CHECK(select_checkpoint(cs).step == 3);
    cs[2].val_dice = 0.6;
    CHECK(select_checkpoint(cs).step == 2);
    CHECK_THROWS_AS((void)select_checkpoint({}), ValueError);
}

TEST_CASE("run_training selects a checkpoint whose Dice replays") {
    data::DatasetSplit split = data::split_source(toy(12, 5), 0.75, 0);
    std::vector<StepRecord> steps;
    int saved = 0;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) { steps.push_back(r); };
    hooks.on_checkpoint = [&](const Checkpoint&) { ++saved; };
    const TrainConfig cfg = tiny_config(Mode::kFull);
    const TrainResult result = run_training(cfg, split, 2, hooks);
    // 9 train samples, batch 4: 3 steps per epoch.
    CHECK(result.steps == 6);
    CHECK(steps.size() == 6);
    CHECK(saved == 2);
    CHECK(steps.front().lr == doctest::Approx(cfg.lr));
    CHECK(steps.back().epoch == 1);

    const Checkpoint& best = result.best();
    REQUIRE(best.has_parameters());
    const Trainer replay = Trainer::from_checkpoint(best);
    const double dice = eval::mean_foreground_dice(replay.segmenter(), split.val, 2);
    CHECK(std::abs(dice - best.val_dice) < 1e-6);

    // Only the best entry keeps its parameters.
    int with_params = 0;
    for (const auto& c : result.checkpoints) with_params += c.has_parameters() ? 1 : 0;
    CHECK(with_params == 1);

    data::DatasetSplit empty;
    CHECK_THROWS_AS((void)run_training(cfg, empty, 2), ValueError);
}

TEST_CASE("checkpoint round trip and corruption") {
    const fs::path dir = scratch("ckpt");
    Trainer t(tiny_config(Mode::kFull), 2, 32, 32);
    (void)t.train_step(toy_batch());
    Checkpoint c = t.snapshot(0.625);
    c.metrics["cons"] = 0.25;
    const fs::path path = dir / "a.ckpt";
    save_checkpoint(path, c);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.step == c.step);
    CHECK(back.val_dice == c.val_dice);
    CHECK(back.config_hash == c.config_hash);
    CHECK(back.config_text == c.config_text);
    CHECK(back.metrics == c.metrics);
    CHECK(back.blobs == c.blobs);
    CHECK(Trainer::from_checkpoint(back).hashes() == t.hashes());

    const auto size = fs::file_size(path);
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream(dir / "trunc.ckpt", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(size - 7));
        bytes[bytes.size() - 5] ^= 0x40;
        std::ofstream(dir / "flip.ckpt", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(size));
        std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
    }
    CHECK_THROWS_AS((void)load_checkpoint(dir / "trunc.ckpt"), IoError);
    CHECK_THROWS_AS((void)load_checkpoint(dir / "flip.ckpt"), IoError);
    CHECK_THROWS_AS((void)load_checkpoint(dir / "junk.ckpt"), IoError);
    CHECK_THROWS_AS((void)load_checkpoint(dir / "missing.ckpt"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("non-finite losses halve the learning rate, then abort") {
    const Batch batch = toy_batch();
    TrainConfig cfg = tiny_config(Mode::kErm);
    cfg.lr_linear_decay = false;
    Trainer t(cfg, 2, 32, 32);
    for (auto* p : t.segmenter().parameters()) p->value[0] = std::nanf("");
    const auto before = t.hashes().segmenter;
    const loss::LossReport r = t.train_step(batch);
    CHECK(r.skipped);
    CHECK(t.nonfinite_events() == 1);
    CHECK(t.learning_rate(0) == doctest::Approx(cfg.lr / 2));
    CHECK(t.hashes().segmenter == before);
    CHECK_THROWS_AS((void)t.train_step(batch), TrainingDiverged);
}

TEST_CASE("cutout") {
    Tensor<Real> ones(16, 1, 32, 32, Real(1));
    Rng rng(2);
    const Tensor<Real> out = cutout(ones, rng);
    for (int n = 0; n < 16; ++n) {
        int zeros = 0, y0 = 32, y1 = -1, x0 = 32, x1 = -1;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                if (out(n, 0, y, x) != 0) continue;
                ++zeros;
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
        const int side = y1 - y0 + 1;
        CHECK(side >= 4);
        CHECK(side <= 8);
        CHECK(x1 - x0 + 1 == side);
        CHECK(zeros == side * side);
    }
}
