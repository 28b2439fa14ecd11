// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Two-step min-max training: the segmenter minimizes supervision plus
// dual-view consistency; the two synthesizers and the patch encoder then
// ascend consistency plus the contrastive MI terms.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "advsdg/checkpoint.hpp"
#include "advsdg/config.hpp"
#include "advsdg/data.hpp"
#include "advsdg/losses.hpp"
#include "advsdg/mi_regularizer.hpp"
#include "advsdg/segmenter.hpp"
#include "advsdg/synthesizer.hpp"

namespace advsdg {

struct Batch {
    Tensor<Real> images;  // [B, 1, H, W]
    LabelMask labels;     // [B, H, W]
};

/// Stacks samples (which must share a shape) into a batch.
[[nodiscard]] Batch make_batch(const std::vector<data::Sample>& samples);
[[nodiscard]] Batch make_batch(const std::vector<const data::Sample*>& samples);

/// Zero-filled square per image, side uniform in [H/8, H/4], fully inside the image.
[[nodiscard]] Tensor<Real> cutout(const Tensor<Real>& images, Rng& rng);

/// Random draws shared by the two steps of one training step.
struct StepContext {
    /// Step index mixed with a batch fingerprint; 0 until first use.
    std::uint64_t key = 0;
    std::vector<synth::MixRatio> alpha1, alpha2;
    synth::StyleNoise z1, z2;
    mi::PatchLocations locations;
    /// Per-step random synthesizers (NO_ADVERSARIAL and GIN).
    std::optional<synth::Synthesizer<Real>> random1, random2;
    Tensor<Real> cutout_images;
};

class Trainer {
public:
    Trainer(const TrainConfig& config, int num_classes, int image_h, int image_w);

    /// Rebuilds every network from a checkpoint with parameters.
    [[nodiscard]] static Trainer from_checkpoint(const Checkpoint& checkpoint);

    /// Minimization step on the segmenter only.
    loss::LossReport train_step_segmenter(const Batch& batch);
    /// Ascent step on the synthesizers and, with MI active, the encoder. Skipped
    /// (all-zero report) in modes without an adversary.
    loss::LossReport train_step_adversary(const Batch& batch);
    /// Segmenter step then adversary step on the same draws, then advances the
    /// step counter. The report merges sup/cons from the first with mi from the second.
    loss::LossReport train_step(const Batch& batch);

    /// Losses of the current state without updating anything.
    [[nodiscard]] loss::LossReport evaluate_losses(const Batch& batch);

    /// Learning rate used at `step`: lr * scale * (T - step) / T under the linear schedule.
    [[nodiscard]] double learning_rate(std::int64_t step) const;
    void set_total_steps(std::int64_t total) { total_steps_ = total; }
    [[nodiscard]] std::int64_t total_steps() const noexcept { return total_steps_; }
    [[nodiscard]] std::int64_t step() const noexcept { return step_; }
    [[nodiscard]] int nonfinite_events() const noexcept { return nonfinite_events_; }

    [[nodiscard]] Checkpoint snapshot(double val_dice) const;

    [[nodiscard]] const TrainConfig& config() const noexcept { return config_; }
    [[nodiscard]] int num_classes() const noexcept { return num_classes_; }
    [[nodiscard]] seg::Segmenter<Real>& segmenter() noexcept { return segmenter_; }
    [[nodiscard]] const seg::Segmenter<Real>& segmenter() const noexcept { return segmenter_; }
    [[nodiscard]] synth::Synthesizer<Real>& synth1() noexcept { return synth1_; }
    [[nodiscard]] synth::Synthesizer<Real>& synth2() noexcept { return synth2_; }
    [[nodiscard]] mi::PatchEncoder<Real>& encoder() noexcept { return encoder_; }

    /// Hashes of the parameter groups theta1..theta4.
    struct GroupHashes {
        std::uint64_t synth1, synth2, segmenter, encoder;
        friend bool operator==(const GroupHashes&, const GroupHashes&) = default;
    };
    [[nodiscard]] GroupHashes hashes() const;

    /// Draws for the current step; rebuilt when the step or batch shape changes.
    [[nodiscard]] const StepContext& context(const Batch& batch);

    /// The two views the segmenter sees at the current step.
    [[nodiscard]] std::pair<Tensor<Real>, Tensor<Real>> views(const Batch& batch);

private:
    [[nodiscard]] bool adversarial() const noexcept;
    [[nodiscard]] bool mi_active() const noexcept;
    void on_nonfinite(const char* where);

    TrainConfig config_;
    int num_classes_ = 2;
    int image_h_ = 0, image_w_ = 0;
    synth::Synthesizer<Real> synth1_, synth2_;
    seg::Segmenter<Real> segmenter_;
    mi::PatchEncoder<Real> encoder_;
    nn::Adam<Real> adam_synth1_, adam_synth2_, adam_seg_, adam_encoder_;
    std::int64_t step_ = 0;
    std::int64_t total_steps_ = 1;
    double lr_scale_ = 1.0;
    int nonfinite_events_ = 0;
    StepContext context_;
};

struct StepRecord {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    loss::LossReport report;
    double wall_seconds = 0.0;  // since training start
};

struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
    std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;
    std::int64_t steps = 0;
    /// Parameters of the best entry are always kept; others are released unless
    /// output.save_all_checkpoints is set.
    [[nodiscard]] const Checkpoint& best() const { return select_checkpoint(checkpoints); }
};

/// Steps per epoch = ceil(|train| / batch_size); validation every val_every steps
/// (once per epoch when 0) and at the final step. Throws ValueError for an empty train split.
[[nodiscard]] TrainResult run_training(const TrainConfig& config, const data::DatasetSplit& split, int num_classes,
                                       const TrainHooks& hooks = {});

}  // namespace advsdg
