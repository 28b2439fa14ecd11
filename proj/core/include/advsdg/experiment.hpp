// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Resolves the data side of a TrainConfig: the source split and the held-out
// target domains, either generated (data.root empty) or read from disk.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advsdg/config.hpp"
#include "advsdg/data.hpp"
#include "advsdg/evaluation.hpp"

namespace advsdg {

struct ExperimentData {
    data::DatasetSplit split;
    std::vector<eval::Domain> targets;
    int num_classes = 2;
    std::vector<std::string> class_names;
};

/// Seeds of the generated source and target sets. Targets use other shapes than
/// the source, so no test image has a training twin.
[[nodiscard]] std::uint64_t toy_source_seed(std::uint64_t seed) noexcept;
[[nodiscard]] std::uint64_t toy_target_seed(std::uint64_t seed) noexcept;

/// Generated toy domain, z-scored per image and resized when data.resize > 0.
[[nodiscard]] std::vector<data::Sample> toy_domain(const TrainConfig& config, data::TextureFamily family,
                                                   int n_samples, std::uint64_t seed);

/// Loads or generates everything `config` names. Target sets hold half as many
/// generated samples as the source (at least one).
[[nodiscard]] ExperimentData prepare_experiment(const TrainConfig& config, bool load_targets = true);

/// Target domains only, for evaluating a trained checkpoint.
[[nodiscard]] std::vector<eval::Domain> prepare_targets(const TrainConfig& config,
                                                        std::vector<std::string>* class_names = nullptr);

}  // namespace advsdg
