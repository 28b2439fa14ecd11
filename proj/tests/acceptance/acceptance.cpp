// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks, one PASS/FAIL line each. Groups run separately:
//   advsdg_acceptance units | determinism | ascent | toy <config> [tsv]
// Exit status is 1 when any line in the group failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "advsdg/config.hpp"
#include "advsdg/evaluation.hpp"
#include "advsdg/experiment.hpp"
#include "advsdg/losses.hpp"
#include "advsdg/mi_regularizer.hpp"
#include "advsdg/nn.hpp"
#include "advsdg/parallel.hpp"
#include "advsdg/segmenter.hpp"
#include "advsdg/synthesizer.hpp"
#include "advsdg/trainer.hpp"
#include "cli.hpp"
#include "oracles.hpp"

using namespace advsdg;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

using Rows = std::vector<std::vector<double>>;

Rows unit_rows(int p, int d, std::mt19937_64& rng) {
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

TrainConfig small_config(Mode mode) {
    TrainConfig c;
    c.mode = mode;
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

Batch small_batch(std::uint64_t seed, int size = 32) {
    data::ToyOptions o;
    o.size = size;
    o.label_by_kind = false;
    auto s = data::make_toy_dataset(4, data::TextureFamily::kFlat, seed, o);
    for (auto& x : s) x.image = data::normalize_zscore(x.image);
    return make_batch(s);
}

// ---------------------------------------------------------------------------

void dice_oracle_check() {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> label(0, 2);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        Mask p(8, 8), g(8, 8);
        for (auto& v : p.v) v = label(rng);
        for (auto& v : g.v) v = label(rng);
        for (int k = 0; k < 3; ++k) mismatches += eval::dice_score(p, g, k) != testing::dice_oracle(p.v, g.v, k);
    }
    report(mismatches == 0, "U1 Dice equals set-count oracle on 1000 random 8x8 pairs",
           std::to_string(mismatches) + " mismatches");
}

void kl_properties() {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const SoftPrediction<double> p{testing::random_simplex<double>(1, 4, 3, 3, rng)};
        worst = std::max(worst, std::abs(loss::kl_divergence(p, p)));
    }
    SoftPrediction<double> onehot{Tensor<double>(1, 2, 1, 1)}, uniform{Tensor<double>(1, 2, 1, 1)};
    onehot.probs[0] = 1.0;
    uniform.probs[0] = uniform.probs[1] = 0.5;
    const double ln2 = loss::kl_divergence(onehot, uniform);
    report(worst <= 1e-6 && std::abs(ln2 - std::log(2.0)) <= 1e-4, "U2 KL(p,p)=0 and KL(onehot, uniform2)=ln 2",
           fmt("max |KL(p,p)| %.3g, KL(onehot,uniform) %.8f", worst, ln2));
}

void contrastive_oracle_check() {
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int p : {2, 3, 8}) {
        for (double tau : {0.07, 0.5, 1.0}) {
            const Rows src = unit_rows(p, 16, rng), syn = unit_rows(p, 16, rng);
            const double got = mi::contrastive_mi_loss(to_matrix(src), to_matrix(syn), tau);
            worst = std::max(worst, std::abs(got - testing::contrastive_oracle(syn, src, syn, tau)));
        }
    }
    Matrix<double> e(2, 2);
    e(0, 0) = e(1, 1) = 1.0;
    const double one_neg = mi::contrastive_mi_loss(e, e, 1.0);
    report(worst <= 1e-6 && std::abs(one_neg - (-0.31326)) <= 1e-5,
           "U3 contrastive loss equals the double-loop oracle; orthogonal case log(e/(e+1))",
           fmt("max deviation %.3g, orthogonal case %.6f", worst, one_neg));
}

void adain_and_identity() {
    std::mt19937_64 rng(4);
    Tensor<float> x(1, 1, 4, 4);
    testing::fill_normal(x, rng);
    const std::vector<float> mu = {0.5f}, sd = {2.0f};
    const Tensor<float> y = nn::adain<float>(x, mu, sd, nullptr);
    double m = 0.0, ss = 0.0;
    for (float v : y.values()) m += v;
    m /= 16.0;
    for (float v : y.values()) ss += (v - m) * (v - m);
    const double s = std::sqrt(ss / 16.0);

    Rng init(5);
    const synth::Synthesizer<float> t(synth::SynthesizerOptions{}, init);
    Tensor<float> img(2, 1, 16, 16);
    testing::fill_normal(img, rng);
    Rng zr(6);
    const auto z = synth::sample_style(zr, t.style_channels());
    const bool identical = synth::synthesize(img, z, synth::MixRatio(0.0), t) == img;
    report(std::abs(m - 0.5) <= 1e-4 && std::abs(s - 2.0) <= 1e-4 && identical,
           "U4 AdaIN output statistics match the style; alpha=0 is bit-identical",
           fmt("mean %.6f std %.6f", m, s) + (identical ? ", identical" : ", alpha=0 differs"));
}

void gradient_checks() {
    std::mt19937_64 rng(7);
    // Losses.
    double loss_err = 0.0;
    {
        SoftPrediction<double> p{testing::random_simplex<double>(2, 3, 2, 2, rng)};
        SoftPrediction<double> q{testing::random_simplex<double>(2, 3, 2, 2, rng)};
        LabelMask y(2, 2, 2);
        for (std::size_t i = 0; i < y.labels.size(); ++i) y.labels[i] = static_cast<std::int32_t>(i % 3);
        const auto kg = loss::kl_divergence_grad(p, q);
        const auto sg = loss::supervised_loss_grad(p, y);
        for (std::size_t i = 0; i < p.probs.size(); ++i) {
            loss_err = std::max(loss_err, testing::rel_error(kg.d_first[i], testing::central_difference(&p.probs[i], [&] {
                                                                 return loss::kl_divergence(p, q);
                                                             })));
            loss_err = std::max(loss_err, testing::rel_error(kg.d_second[i], testing::central_difference(&q.probs[i], [&] {
                                                                 return loss::kl_divergence(p, q);
                                                             })));
            loss_err = std::max(loss_err, testing::rel_error(sg.d_first[i], testing::central_difference(&p.probs[i], [&] {
                                                                 return loss::supervised_loss(p, y);
                                                             })));
        }
    }
    // Synthesizer, every parameter.
    double synth_err = 0.0;
    {
        Rng init(8);
        synth::Synthesizer<double> t(synth::SynthesizerOptions{}, init);
        Tensor<double> x(1, 1, 12, 12), r(1, 1, 12, 12);
        testing::fill_normal(x, rng);
        testing::fill_normal(r, rng);
        Rng zr(9);
        const auto z = synth::sample_style(zr, t.style_channels());
        const synth::MixRatio alpha[] = {synth::MixRatio(0.7)};
        auto objective = [&] {
            const auto out = t.forward(x, z, alpha);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
            return s;
        };
        typename synth::Synthesizer<double>::Cache cache;
        (void)t.forward(x, z, alpha, &cache);
        nn::zero_grad(t.parameters());
        (void)t.backward(cache, r, false);
        for (auto* p : t.parameters())
            for (std::size_t i = 0; i < p->value.size(); ++i)
                synth_err = std::max(synth_err, testing::rel_error(p->grad[i], testing::central_difference(&p->value[i], objective), 1e-5));
    }
    // Tiny segmenter: mean log-probability w.r.t. one weight of each convolution.
    double seg_err = 0.0;
    {
        seg::SegmenterOptions o;
        o.stages = 2;
        o.base_width = 4;
        o.convs_per_stage = 1;
        Rng init(10);
        seg::UNet<double> net(o, init);
        Tensor<double> x(1, 1, 16, 16);
        testing::fill_normal(x, rng);
        auto objective = [&] {
            const auto p = net.forward(x);
            double s = 0.0;
            for (std::size_t i = 0; i < p.probs.size(); ++i) s += std::log(p.probs[i]);
            return s / static_cast<double>(p.probs.size());
        };
        typename seg::UNet<double>::Cache cache;
        const auto p = net.forward(x, &cache);
        Tensor<double> d(p.probs.n(), p.probs.c(), p.probs.h(), p.probs.w());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 / (p.probs[i] * static_cast<double>(d.size()));
        nn::zero_grad(net.parameters());
        (void)net.backward(cache, d, false);
        for (auto* prm : net.parameters()) {
            if (!prm->name.ends_with("weight")) continue;
            const std::size_t i = prm->value.size() / 2;
            seg_err = std::max(seg_err, testing::rel_error(prm->grad[i], testing::central_difference(&prm->value[i], objective), 1e-8));
        }
    }
    report(loss_err <= 1e-4 && synth_err <= 1e-3 && seg_err <= 1e-3,
           "U5 finite-difference checks (losses 1e-4, synthesizer 1e-3, tiny segmenter 1e-3)",
           fmt("max relative error: losses %.2g, synthesizer %.2g, segmenter %.2g", loss_err, synth_err, seg_err));
}

void isolation_and_inactive() {
    const Batch batch = small_batch(11);
    bool ok = true;
    std::string bad;
    for (Mode mode : {Mode::kFull, Mode::kNoAdversarial, Mode::kNoMi, Mode::kErm, Mode::kCutout, Mode::kGin}) {
        Trainer t(small_config(mode), 2, 32, 32);
        const auto h0 = t.hashes();
        const auto seg_report = t.train_step_segmenter(batch);
        const auto h1 = t.hashes();
        const auto adv_report = t.train_step_adversary(batch);
        const auto h2 = t.hashes();
        const bool adversarial = mode == Mode::kFull || mode == Mode::kNoMi;
        bool m = h1.segmenter != h0.segmenter && h1.synth1 == h0.synth1 && h1.synth2 == h0.synth2 &&
                 h1.encoder == h0.encoder && h2.segmenter == h1.segmenter &&
                 (h2.synth1 != h1.synth1) == adversarial && (h2.synth2 != h1.synth2) == adversarial &&
                 (h2.encoder != h1.encoder) == (mode == Mode::kFull);
        if (mode != Mode::kFull) m = m && adv_report.mi_1 == 0.0 && adv_report.mi_2 == 0.0;
        if (!adversarial) m = m && adv_report == loss::LossReport{};
        if (mode == Mode::kErm || mode == Mode::kCutout) m = m && seg_report.cons == 0.0;
        if (!m) bad += std::string(bad.empty() ? "" : ", ") + std::string(to_string(mode));
        ok = ok && m;
    }
    report(ok, "U6 parameter-group isolation for both steps; inactive losses exactly zero",
           ok ? "6 modes checked" : "violations in " + bad);
}

int run_units() {
    const auto start = std::chrono::steady_clock::now();
    dice_oracle_check();
    kl_properties();
    contrastive_oracle_check();
    adain_and_identity();
    gradient_checks();
    isolation_and_inactive();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(secs < 60.0, "unit/oracle suite under 60 s", fmt("%.2f s", secs));
    return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_determinism() {
    const fs::path root = fs::temp_directory_path() / "advsdg_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "run.cfg") << "trainer.epochs = 3\n"
                                       "data.toy_samples = 24\n"
                                       "data.toy_size = 32\n"
                                       "seg.base_width = 4\n"
                                       "seg.stages = 2\n"
                                       "mi.widths = 4,8,16\n"
                                       "mi.embed_dim = 16\n"
                                       "mi.patches = 8\n";
    std::ostringstream out, err;
    const int a = cli::run({"train", "-c", (root / "run.cfg").string(), "-o", (root / "a").string()}, out, err);
    const int b = cli::run({"train", "-c", (root / "run.cfg").string(), "-o", (root / "b").string()}, out, err);
    const std::string ma = slurp(root / "a" / "metrics.jsonl");
    const std::string mb = slurp(root / "b" / "metrics.jsonl");
    const bool ok = a == 0 && b == 0 && !ma.empty() && ma == mb;
    report(ok, "two identical train invocations write byte-identical metrics logs",
           a != 0 || b != 0 ? "train failed: " + err.str()
                            : std::to_string(ma.size()) + " bytes" + (ma == mb ? ", identical" : ", differ"));
    fs::remove_all(root);
    return failures == 0 ? 0 : 1;
}

int run_ascent(const std::string& config_path) {
    TrainConfig cfg = train_config_from(Config::load(config_path));
    cfg.mode = Mode::kFull;
    const int side = cfg.crop > 0 ? cfg.crop : cfg.toy.size;
    const Batch batch = small_batch(21, side);
    Trainer t(cfg, 2, side, side);
    t.set_total_steps(1000);
    const auto seg_hash = t.hashes().segmenter;
    const double before = t.evaluate_losses(batch).cons;
    for (int i = 0; i < 20; ++i) (void)t.train_step_adversary(batch);
    const double after = t.evaluate_losses(batch).cons;
    const bool frozen = t.hashes().segmenter == seg_hash;
    report(frozen && after >= 0.95 * before, "20 adversary steps with a frozen segmenter do not decrease consistency (5% tolerance)",
           fmt("cons %.6g -> %.6g", before, after) + (frozen ? "" : ", segmenter changed"));
    return failures == 0 ? 0 : 1;
}

int run_toy(const std::string& config_path, const std::string& tsv_path) {
    const TrainConfig cfg = train_config_from(Config::load(config_path));
    const auto start = std::chrono::steady_clock::now();
    const ExperimentData data = prepare_experiment(cfg);
    eval::AblationOptions opts;
    opts.modes = {Mode::kFull, Mode::kNoAdversarial, Mode::kNoMi, Mode::kErm};
    opts.seeds = {0, 1, 2};
    opts.on_run = [&](Mode m, std::uint64_t seed, const eval::ResultsTable& t) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("  [%7.0f s] %-15s seed %llu  target mean %.2f\n", secs, std::string(to_string(m)).c_str(),
                    static_cast<unsigned long long>(seed), t.average(std::string(to_string(m))));
        std::fflush(stdout);
    };
    const eval::ResultsTable table =
        eval::run_ablation(cfg, data.split, data.num_classes, data.targets, opts, data.class_names);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s", table.to_text().c_str());
    if (!tsv_path.empty()) table.write_tsv(tsv_path);

    const double full = table.average("FULL");
    const double erm = table.average("ERM");
    const double no_adv = table.average("NO_ADVERSARIAL");
    const double no_mi = table.average("NO_MI");
    report(full - erm >= 5.0, "(a) FULL mean target Dice exceeds ERM by at least 5 points",
           fmt("FULL %.2f, ERM %.2f, margin %.2f", full, erm, full - erm));
    report(full >= no_adv && full >= no_mi, "(b) FULL >= NO_ADVERSARIAL and FULL >= NO_MI on the 3-seed mean",
           fmt("FULL %.2f, NO_ADVERSARIAL %.2f, NO_MI %.2f", full, no_adv, no_mi));
    report(secs < 1200.0, "toy experiment wall time under 20 min",
           fmt("%.0f s with %.0f worker(s)", secs, static_cast<double>(worker_count())));
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string group = argc > 1 ? argv[1] : "units";
    try {
        if (group == "units") return run_units();
        if (group == "determinism") return run_determinism();
        if (group == "ascent" && argc > 2) return run_ascent(argv[2]);
        if (group == "toy" && argc > 2) return run_toy(argv[2], argc > 3 ? argv[3] : "");
    } catch (const std::exception& e) {
        report(false, group, std::string("aborted: ") + e.what());
        return 1;
    }
    std::fprintf(stderr, "usage: %s units | determinism | ascent <config> | toy <config> [results.tsv]\n", argv[0]);
    return 2;
}
