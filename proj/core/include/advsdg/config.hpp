// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Flat `dotted.key = value` configuration and the typed training config.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "advsdg/data.hpp"
#include "advsdg/losses.hpp"
#include "advsdg/mi_regularizer.hpp"
#include "advsdg/segmenter.hpp"
#include "advsdg/synthesizer.hpp"

namespace advsdg {

/// Ordered string map. Lines are `key = value`; `#` starts a comment.
class Config {
public:
    Config() = default;

    [[nodiscard]] static Config parse(std::string_view text, std::string_view origin = "<string>");
    [[nodiscard]] static Config load(const std::filesystem::path& path);

    /// Canonical form: keys sorted, one `key = value` line each.
    [[nodiscard]] std::string serialize() const;
    /// FNV-1a of the canonical form, so independent of source key order.
    [[nodiscard]] std::uint64_t hash() const;

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    [[nodiscard]] bool contains(const std::string& key) const { return values_.contains(key); }
    [[nodiscard]] const std::string& get(const std::string& key) const;
    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// Applies `other` on top of this config.
    void merge(const Config& other);

    friend bool operator==(const Config&, const Config&) = default;

private:
    std::map<std::string, std::string> values_;
};

enum class Mode { kFull, kNoAdversarial, kNoMi, kErm, kCutout, kGin };

[[nodiscard]] std::string_view to_string(Mode m) noexcept;
[[nodiscard]] Mode parse_mode(std::string_view s);

enum class AlphaMode { kBatch, kSample };
enum class CriticMode { kMaximize, kMinimize };
enum class EmptyDice { kOne, kSkip };

struct TrainConfig {
    // trainer.*
    Mode mode = Mode::kFull;
    int epochs = 200;
    int batch_size = 4;
    double lr = 3e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    bool lr_linear_decay = true;
    std::uint64_t seed = 0;
    int val_every = 0;  // steps; 0 = once per epoch
    double grad_clip = 5.0;  // adversary step, 0 disables
    AlphaMode alpha_mode = AlphaMode::kBatch;
    bool independent_noise = false;
    double w_sup = 1.0;
    double w_cons = 1.0;
    double w_mi = 1.0;
    bool soft_dice = false;
    int max_steps = 0;  // 0 = epochs * steps_per_epoch
    int crop = 0;       // square random training crop, 0 = full images

    synth::SynthesizerOptions synth;

    // mi.*
    double tau = 0.07;
    int patches = 64;
    mi::NegativeForm negatives = mi::NegativeForm::kQueryVsSource;
    CriticMode critic = CriticMode::kMaximize;
    mi::PatchEncoderOptions encoder;

    seg::SegmenterOptions segmenter;

    // data.*
    std::string data_root;  // empty = generated toy data
    std::string source = "flat";
    std::vector<std::string> targets = {"striped", "noisy", "inverted-contrast"};
    int toy_samples = 200;
    data::ToyOptions toy;
    double split_ratio = 0.7;
    int resize = 0;

    bool augment = true;
    data::AugmentOptions augment_options;

    EmptyDice empty_dice = EmptyDice::kOne;

    std::string output_dir = "runs/default";
    bool save_all_checkpoints = false;

    /// Loss-free consistency checks on value ranges; throws ConfigError naming the key.
    void validate() const;
};

/// Unknown keys and malformed values throw ConfigError naming the key.
[[nodiscard]] TrainConfig train_config_from(const Config& config);
/// Every key, so the output doubles as a documented default config.
[[nodiscard]] Config to_config(const TrainConfig& config);

/// Hash of the fully resolved config.
[[nodiscard]] std::uint64_t config_hash(const TrainConfig& config);

}  // namespace advsdg
