// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "advsdg/evaluation.hpp"
#include "advsdg/parallel.hpp"

namespace advsdg {

namespace {

Tensor<Real> concat_batch(const Tensor<Real>& a, const Tensor<Real>& b) {
    Tensor<Real> out(a.n() + b.n(), a.c(), a.h(), a.w());
    std::copy(a.storage().begin(), a.storage().end(), out.storage().begin());
    std::copy(b.storage().begin(), b.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

Tensor<Real> slice_batch(const Tensor<Real>& t, int begin, int count) {
    Tensor<Real> out(count, t.c(), t.h(), t.w());
    std::copy_n(t.sample(begin), out.size(), out.data());
    return out;
}

void add_into(Tensor<Real>& dst, const Tensor<Real>& src, int first_sample) {
    Real* d = dst.data();
    const Real* s = src.sample(first_sample);
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Tensor<Real> axpby(double a, const Tensor<Real>& x, double b, const Tensor<Real>& y) {
    Tensor<Real> out(x.n(), x.c(), x.h(), x.w());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<Real>(a * x[i] + b * y[i]);
    return out;
}

Tensor<Real> scaled(double a, const Tensor<Real>& x) {
    Tensor<Real> out(x.n(), x.c(), x.h(), x.w());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<Real>(a * x[i]);
    return out;
}

SoftPrediction<Real> slice_pred(const SoftPrediction<Real>& p, int begin, int count) {
    return {slice_batch(p.probs, begin, count)};
}

std::uint64_t batch_fingerprint(const Batch& batch) {
    Fnv1a h;
    h.update_values(batch.images.values());
    h.update_values(std::span<const std::int32_t>(batch.labels.labels));
    return h.digest();
}

Matrix<Real> to_real(const Matrix<double>& m, double scale) {
    Matrix<Real> out(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) out(r, c) = static_cast<Real>(scale * m(r, c));
    }
    return out;
}

void add_scaled(Matrix<Real>& dst, const Matrix<double>& m, double scale) {
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) dst(r, c) += static_cast<Real>(scale * m(r, c));
    }
}

template <typename Net>
void append_blobs(std::vector<ParameterBlob>& out, const std::string& group, Net& net) {
    for (const nn::Parameter<Real>* p : net.parameters()) {
        out.push_back(ParameterBlob{group + "/" + p->name, p->value.shape(), p->value.storage()});
    }
}

template <typename Net>
void restore_blobs(const Checkpoint& ckpt, const std::string& group, Net& net) {
    for (nn::Parameter<Real>* p : net.parameters()) {
        const ParameterBlob& b = ckpt.blob(group + "/" + p->name);
        if (b.shape != p->value.shape() || b.values.size() != p->value.size()) {
            throw ShapeError("checkpoint parameter " + b.name + " has shape " + shape_string(b.shape) +
                             ", model expects " + shape_string(p->value.shape()));
        }
        p->value.storage() = b.values;
    }
}

std::uint64_t context_key(std::int64_t step, std::uint64_t fingerprint) {
    return splitmix64(static_cast<std::uint64_t>(step) ^ splitmix64(fingerprint));
}

}  // namespace

Batch make_batch(const std::vector<const data::Sample*>& samples) {
    if (samples.empty()) throw ValueError("make_batch: no samples");
    const int h = samples.front()->image.h;
    const int w = samples.front()->image.w;
    const int n = static_cast<int>(samples.size());
    Batch b{Tensor<Real>(n, 1, h, w), LabelMask(n, h, w)};
    for (int i = 0; i < n; ++i) {
        const data::Sample& s = *samples[i];
        if (s.image.h != h || s.image.w != w || s.mask.h != h || s.mask.w != w) {
            throw ShapeError("make_batch: samples differ in shape");
        }
        std::copy(s.image.v.begin(), s.image.v.end(), b.images.sample(i));
        std::copy(s.mask.v.begin(), s.mask.v.end(), b.labels.labels.begin() + static_cast<std::ptrdiff_t>(i) * h * w);
    }
    return b;
}

Batch make_batch(const std::vector<data::Sample>& samples) {
    std::vector<const data::Sample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    return make_batch(ptrs);
}

Tensor<Real> cutout(const Tensor<Real>& images, Rng& rng) {
    Tensor<Real> out = images;
    const int h = images.h();
    const int w = images.w();
    const int lo = std::max(1, std::min(h, w) / 8);
    const int hi = std::max(lo, std::min(h, w) / 4);
    std::uniform_int_distribution<int> side_dist(lo, hi);
    for (int n = 0; n < images.n(); ++n) {
        const int side = side_dist(rng);
        const int y0 = std::uniform_int_distribution<int>(0, h - side)(rng);
        const int x0 = std::uniform_int_distribution<int>(0, w - side)(rng);
        for (int c = 0; c < images.c(); ++c) {
            for (int y = y0; y < y0 + side; ++y) {
                for (int x = x0; x < x0 + side; ++x) out(n, c, y, x) = 0;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& config, int num_classes, int image_h, int image_w)
    : config_(config), num_classes_(num_classes), image_h_(image_h), image_w_(image_w) {
    config_.validate();
    if (num_classes < 2) throw ValueError("trainer needs at least two classes");
    config_.segmenter.classes = num_classes;
    config_.segmenter.image_channels = 1;
    config_.synth.image_channels = 1;
    config_.encoder.image_channels = 1;

    Rng r1 = substream(config_.seed, "init.synth1");
    Rng r2 = substream(config_.seed, "init.synth2");
    Rng r3 = substream(config_.seed, "init.segmenter");
    Rng r4 = substream(config_.seed, "init.encoder");
    synth1_ = synth::Synthesizer<Real>(config_.synth, r1);
    synth2_ = synth::Synthesizer<Real>(config_.synth, r2);
    segmenter_ = seg::Segmenter<Real>(config_.segmenter, r3);
    encoder_ = mi::PatchEncoder<Real>(config_.encoder, r4);
    const nn::AdamOptions adam{config_.beta1, config_.beta2, 1e-8};
    adam_synth1_ = nn::Adam<Real>(adam);
    adam_synth2_ = nn::Adam<Real>(adam);
    adam_seg_ = nn::Adam<Real>(adam);
    adam_encoder_ = nn::Adam<Real>(adam);

    if (image_h > 0 && image_w > 0) {
        const int div = segmenter_.spatial_divisor();
        if (image_h % div != 0 || image_w % div != 0) {
            throw ConfigError("seg.stages", "images of " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                                                " are not divisible by 2^seg.stages = " + std::to_string(div) +
                                                "; pad the data or lower seg.stages");
        }
        if (mi_active()) {
            const auto [fh, fw] = encoder_.feature_extent(image_h, image_w);
            if (fh * fw < config_.patches) {
                throw ConfigError("mi.patches", "mi.patches = " + std::to_string(config_.patches) +
                                                    " exceeds the " + std::to_string(fh) + "x" + std::to_string(fw) +
                                                    " encoder feature map");
            }
        }
    }
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.has_parameters()) throw ValueError("checkpoint carries no parameters");
    const TrainConfig cfg = train_config_from(Config::parse(ckpt.config_text, "checkpoint config"));
    Trainer t(cfg, ckpt.num_classes, 0, 0);
    restore_blobs(ckpt, "synth1", t.synth1_);
    restore_blobs(ckpt, "synth2", t.synth2_);
    restore_blobs(ckpt, "segmenter", t.segmenter_);
    restore_blobs(ckpt, "encoder", t.encoder_);
    t.step_ = ckpt.step;
    return t;
}

bool Trainer::adversarial() const noexcept {
    return config_.mode == Mode::kFull || config_.mode == Mode::kNoMi;
}

bool Trainer::mi_active() const noexcept { return config_.mode == Mode::kFull; }

double Trainer::learning_rate(std::int64_t step) const {
    const double base = config_.lr * lr_scale_;
    if (!config_.lr_linear_decay) return base;
    const double t = static_cast<double>(std::clamp<std::int64_t>(step, 0, total_steps_));
    const double total = static_cast<double>(total_steps_);
    return base * (total - t) / total;
}

void Trainer::on_nonfinite(const char* where) {
    ++nonfinite_events_;
    if (nonfinite_events_ >= 2) {
        throw TrainingDiverged(std::string("non-finite loss or gradient in the ") + where + " step at step " +
                               std::to_string(step_) + " after the learning rate was already halved (lr now " +
                               std::to_string(learning_rate(step_)) + ")");
    }
    lr_scale_ *= 0.5;
}

Trainer::GroupHashes Trainer::hashes() const {
    return {synth1_.parameter_hash(), synth2_.parameter_hash(), segmenter_.parameter_hash(),
            encoder_.parameter_hash()};
}

const StepContext& Trainer::context(const Batch& batch) {
    const std::uint64_t key = context_key(step_, batch_fingerprint(batch));
    if (key != 0 && context_.key == key) return context_;
    StepContext ctx;
    ctx.key = key;
    const auto t = static_cast<std::uint64_t>(step_);
    const int n = batch.images.n();
    const std::uint64_t seed = config_.seed;

    Rng alpha_rng = substream(seed, "alpha", t);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int count = config_.alpha_mode == AlphaMode::kSample ? n : 1;
    for (int i = 0; i < count; ++i) ctx.alpha1.emplace_back(unit(alpha_rng));
    for (int i = 0; i < count; ++i) ctx.alpha2.emplace_back(unit(alpha_rng));

    Rng style_rng = substream(seed, "style", t);
    const std::vector<int> channels = synth1_.style_channels();
    ctx.z1 = synth::sample_style(style_rng, channels);
    ctx.z2 = config_.independent_noise ? synth::sample_style(style_rng, channels) : ctx.z1;

    if (mi_active()) {
        Rng patch_rng = substream(seed, "patches", t);
        const auto [fh, fw] = encoder_.feature_extent(batch.images.h(), batch.images.w());
        ctx.locations = mi::sample_patch_locations(fh, fw, config_.patches, patch_rng);
    }
    if (config_.mode == Mode::kNoAdversarial || config_.mode == Mode::kGin) {
        Rng seed_rng = substream(seed, "random_synth", t);
        synth::SynthesizerOptions opts = config_.synth;
        opts.use_adain = config_.mode == Mode::kNoAdversarial;
        const std::uint64_t s1 = seed_rng();
        const std::uint64_t s2 = seed_rng();
        ctx.random1 = synth::Synthesizer<Real>::random_init(opts, s1);
        ctx.random2 = synth::Synthesizer<Real>::random_init(opts, s2);
    }
    if (config_.mode == Mode::kCutout) {
        Rng cut_rng = substream(seed, "cutout", t);
        ctx.cutout_images = cutout(batch.images, cut_rng);
    }
    context_ = std::move(ctx);
    return context_;
}

std::pair<Tensor<Real>, Tensor<Real>> Trainer::views(const Batch& batch) {
    const StepContext& ctx = context(batch);
    switch (config_.mode) {
        case Mode::kFull:
        case Mode::kNoMi:
            return {synth1_.forward(batch.images, ctx.z1, ctx.alpha1), synth2_.forward(batch.images, ctx.z2, ctx.alpha2)};
        case Mode::kNoAdversarial:
        case Mode::kGin:
            return {ctx.random1->forward(batch.images, ctx.z1, ctx.alpha1),
                    ctx.random2->forward(batch.images, ctx.z2, ctx.alpha2)};
        case Mode::kErm: return {batch.images, batch.images};
        case Mode::kCutout: return {ctx.cutout_images, ctx.cutout_images};
    }
    return {batch.images, batch.images};
}

loss::LossReport Trainer::train_step_segmenter(const Batch& batch) {
    const loss::SupervisedOptions sup_opts{config_.soft_dice};
    const nn::ParameterList<Real> params = segmenter_.parameters();
    nn::zero_grad(params);
    loss::LossReport report;
    const int n = batch.images.n();
    const bool single_view = config_.mode == Mode::kErm || config_.mode == Mode::kCutout;
    auto [x1, x2] = views(batch);

    typename seg::Segmenter<Real>::Cache cache;
    if (single_view) {
        const SoftPrediction<Real> p = segmenter_.forward(x1, &cache);
        const auto g = loss::supervised_loss_grad(p, batch.labels, sup_opts);
        report.sup_1 = g.value;
        report.sup_2 = g.value;
        if (report.finite()) segmenter_.backward(cache, scaled(2.0 * config_.w_sup, g.d_first), false, true);
    } else {
        const SoftPrediction<Real> p = segmenter_.forward(concat_batch(x1, x2), &cache);
        const SoftPrediction<Real> p1 = slice_pred(p, 0, n);
        const SoftPrediction<Real> p2 = slice_pred(p, n, n);
        const auto g1 = loss::supervised_loss_grad(p1, batch.labels, sup_opts);
        const auto g2 = loss::supervised_loss_grad(p2, batch.labels, sup_opts);
        const auto k = loss::kl_divergence_grad(p1, p2);
        report.sup_1 = g1.value;
        report.sup_2 = g2.value;
        report.cons = k.value;
        if (report.finite()) {
            const Tensor<Real> d1 = axpby(config_.w_sup, g1.d_first, config_.w_cons, k.d_first);
            const Tensor<Real> d2 = axpby(config_.w_sup, g2.d_first, config_.w_cons, k.d_second);
            segmenter_.backward(cache, concat_batch(d1, d2), false, true);
        }
    }
    if (!report.finite() || !nn::grads_finite(params)) {
        nn::zero_grad(params);
        report.skipped = true;
        on_nonfinite("segmenter");
        return report;
    }
    adam_seg_.step(params, learning_rate(step_));
    return report;
}

loss::LossReport Trainer::train_step_adversary(const Batch& batch) {
    loss::LossReport report;
    if (!adversarial()) return report;
    const StepContext& ctx = context(batch);
    const int n = batch.images.n();
    const bool use_mi = mi_active();

    typename synth::Synthesizer<Real>::Cache sc1, sc2;
    const Tensor<Real> x1 = synth1_.forward(batch.images, ctx.z1, ctx.alpha1, &sc1);
    const Tensor<Real> x2 = synth2_.forward(batch.images, ctx.z2, ctx.alpha2, &sc2);

    // Ascent on J = w_cons cons + w_mi (mi_1 + mi_2), as descent on -J.
    typename seg::Segmenter<Real>::Cache seg_cache;
    const SoftPrediction<Real> p = segmenter_.forward(concat_batch(x1, x2), &seg_cache);
    const auto k = loss::kl_divergence_grad(slice_pred(p, 0, n), slice_pred(p, n, n));
    report.cons = k.value;
    Tensor<Real> dx;
    if (std::isfinite(k.value)) {
        dx = segmenter_.backward(seg_cache,
                                 concat_batch(scaled(-config_.w_cons, k.d_first), scaled(-config_.w_cons, k.d_second)),
                                 true, false);
    }
    Tensor<Real> dx1 = dx.empty() ? Tensor<Real>(n, 1, x1.h(), x1.w()) : slice_batch(dx, 0, n);
    Tensor<Real> dx2 = dx.empty() ? Tensor<Real>(n, 1, x1.h(), x1.w()) : slice_batch(dx, n, n);

    nn::ParameterList<Real> enc_params;
    if (use_mi) {
        enc_params = encoder_.parameters();
        nn::zero_grad(enc_params);
        typename mi::PatchEncoder<Real>::Cache enc_cache;
        const std::vector<Matrix<Real>> feats =
            encoder_.forward(concat_batch(batch.images, concat_batch(x1, x2)), ctx.locations, &enc_cache);
        std::vector<Matrix<Real>> dfeat(feats.size());
        const double g = -config_.w_mi / n;
        for (int b = 0; b < n; ++b) {
            const auto r1 = mi::contrastive_mi_loss_grad(feats[b], feats[n + b], config_.tau, config_.negatives);
            const auto r2 = mi::contrastive_mi_loss_grad(feats[b], feats[2 * n + b], config_.tau, config_.negatives);
            report.mi_1 += r1.loss / n;
            report.mi_2 += r2.loss / n;
            dfeat[b] = to_real(r1.d_source, g);
            add_scaled(dfeat[b], r2.d_source, g);
            dfeat[n + b] = to_real(r1.d_synth, g);
            dfeat[2 * n + b] = to_real(r2.d_synth, g);
        }
        if (report.finite()) {
            const Tensor<Real> dimg = encoder_.backward(enc_cache, dfeat, true, true);
            add_into(dx1, dimg, n);
            add_into(dx2, dimg, 2 * n);
            if (config_.critic == CriticMode::kMinimize) {
                for (nn::Parameter<Real>* q : enc_params) {
                    for (Real& v : q->grad.storage()) v = -v;
                }
            }
        }
    }

    const nn::ParameterList<Real> p1 = synth1_.parameters();
    const nn::ParameterList<Real> p2 = synth2_.parameters();
    nn::zero_grad(p1);
    nn::zero_grad(p2);
    nn::ParameterList<Real> all = p1;
    all.insert(all.end(), p2.begin(), p2.end());
    all.insert(all.end(), enc_params.begin(), enc_params.end());
    if (report.finite()) {
        synth1_.backward(sc1, dx1, false);
        synth2_.backward(sc2, dx2, false);
    }
    if (!report.finite() || !nn::grads_finite(all)) {
        nn::zero_grad(all);
        report.skipped = true;
        on_nonfinite("adversary");
        return report;
    }
    if (config_.grad_clip > 0.0) nn::clip_grad_norm(all, config_.grad_clip);
    const double lr = learning_rate(step_);
    adam_synth1_.step(p1, lr);
    adam_synth2_.step(p2, lr);
    if (use_mi) adam_encoder_.step(enc_params, lr);
    return report;
}

loss::LossReport Trainer::train_step(const Batch& batch) {
    loss::LossReport report = train_step_segmenter(batch);
    const loss::LossReport adv = train_step_adversary(batch);
    report.mi_1 = adv.mi_1;
    report.mi_2 = adv.mi_2;
    report.skipped = report.skipped || adv.skipped;
    ++step_;
    return report;
}

loss::LossReport Trainer::evaluate_losses(const Batch& batch) {
    loss::LossReport report;
    const loss::SupervisedOptions sup_opts{config_.soft_dice};
    const int n = batch.images.n();
    auto [x1, x2] = views(batch);
    const SoftPrediction<Real> p = segmenter_.forward(concat_batch(x1, x2));
    const SoftPrediction<Real> p1 = slice_pred(p, 0, n);
    const SoftPrediction<Real> p2 = slice_pred(p, n, n);
    report.sup_1 = loss::supervised_loss(p1, batch.labels, sup_opts);
    report.sup_2 = loss::supervised_loss(p2, batch.labels, sup_opts);
    if (config_.mode != Mode::kErm && config_.mode != Mode::kCutout) report.cons = loss::consistency_loss(p1, p2);
    if (mi_active()) {
        const StepContext& ctx = context(batch);
        const auto feats = encoder_.forward(concat_batch(batch.images, concat_batch(x1, x2)), ctx.locations);
        for (int b = 0; b < n; ++b) {
            report.mi_1 += mi::contrastive_mi_loss(feats[b], feats[n + b], config_.tau, config_.negatives) / n;
            report.mi_2 += mi::contrastive_mi_loss(feats[b], feats[2 * n + b], config_.tau, config_.negatives) / n;
        }
    }
    return report;
}

Checkpoint Trainer::snapshot(double val_dice) const {
    Checkpoint c;
    c.step = step_;
    c.config_hash = config_hash(config_);
    c.val_dice = val_dice;
    c.num_classes = num_classes_;
    c.config_text = to_config(config_).serialize();
    auto& self = const_cast<Trainer&>(*this);
    append_blobs(c.blobs, "synth1", self.synth1_);
    append_blobs(c.blobs, "synth2", self.synth2_);
    append_blobs(c.blobs, "segmenter", self.segmenter_);
    append_blobs(c.blobs, "encoder", self.encoder_);
    return c;
}

// ---------------------------------------------------------------------------

TrainResult run_training(const TrainConfig& config, const data::DatasetSplit& split, int num_classes,
                         const TrainHooks& hooks) {
    config.validate();
    if (split.train.empty()) throw ValueError("run_training: the train split is empty");
    const int h = split.train.front().image.h;
    const int w = split.train.front().image.w;
    for (const auto* part : {&split.train, &split.val}) {
        for (const auto& s : *part) {
            if (s.image.h != h || s.image.w != w) throw ShapeError("run_training: samples differ in shape");
        }
    }

    if (config.crop > 0 && (config.crop > h || config.crop > w)) {
        throw ConfigError("trainer.crop", "trainer.crop = " + std::to_string(config.crop) + " exceeds the " +
                                              std::to_string(h) + "x" + std::to_string(w) + " images");
    }
    Trainer trainer(config, num_classes, config.crop > 0 ? config.crop : h, config.crop > 0 ? config.crop : w);
    const auto n = static_cast<std::int64_t>(split.train.size());
    const std::int64_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    std::int64_t total = per_epoch * config.epochs;
    if (config.max_steps > 0) total = std::min<std::int64_t>(total, config.max_steps);
    trainer.set_total_steps(total);
    const std::int64_t val_every = config.val_every > 0 ? config.val_every : per_epoch;
    const int workers = worker_count();

    TrainResult result;
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < total; ++t) {
        const auto epoch = static_cast<int>(t / per_epoch);
        const std::int64_t pos = t % per_epoch;
        if (pos == 0) {
            std::iota(order.begin(), order.end(), 0);
            Rng order_rng = substream(config.seed, "order", static_cast<std::uint64_t>(epoch));
            std::shuffle(order.begin(), order.end(), order_rng);
        }
        const std::int64_t begin = pos * config.batch_size;
        const std::int64_t end = std::min(n, begin + config.batch_size);
        std::vector<data::Sample> augmented(static_cast<std::size_t>(end - begin));
        std::vector<const data::Sample*> members(augmented.size());
        if (config.augment || config.crop > 0) {
            parallel_for(augmented.size(), workers, [&](std::size_t i) {
                const std::size_t idx = order[static_cast<std::size_t>(begin) + i];
                const std::uint64_t key = static_cast<std::uint64_t>(epoch) * n + idx;
                Rng rng = substream(config.seed, "augment", key);
                augmented[i] = config.augment ? data::augment(split.train[idx], config.augment_options, rng)
                                              : split.train[idx];
                if (config.crop > 0) {
                    Rng crop_rng = substream(config.seed, "crop", key);
                    augmented[i] = data::random_crop(augmented[i], config.crop, crop_rng);
                }
            });
            for (std::size_t i = 0; i < augmented.size(); ++i) members[i] = &augmented[i];
        } else {
            for (std::size_t i = 0; i < members.size(); ++i) {
                members[i] = &split.train[order[static_cast<std::size_t>(begin) + i]];
            }
        }
        const Batch batch = make_batch(members);
        const double lr = trainer.learning_rate(t);
        const loss::LossReport report = trainer.train_step(batch);
        if (hooks.on_step) {
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            hooks.on_step(StepRecord{t, epoch, lr, report, wall});
        }
        if ((t + 1) % val_every == 0 || t + 1 == total) {
            const double dice = split.val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : eval::mean_foreground_dice(trainer.segmenter(), split.val,
                                                                               num_classes, config.empty_dice);
            Checkpoint ckpt = trainer.snapshot(std::isfinite(dice) ? dice : 0.0);
            ckpt.metrics = {{"sup_1", report.sup_1}, {"sup_2", report.sup_2}, {"cons", report.cons},
                            {"mi_1", report.mi_1},   {"mi_2", report.mi_2},   {"lr", lr}};
            if (hooks.on_checkpoint) hooks.on_checkpoint(ckpt);
            result.checkpoints.push_back(std::move(ckpt));
            if (!config.save_all_checkpoints) {
                const Checkpoint* best = &select_checkpoint(result.checkpoints);
                for (auto& c : result.checkpoints) {
                    if (&c != best) c.blobs.clear();
                }
            }
        }
    }
    result.steps = total;
    return result;
}

}  // namespace advsdg
