// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Single-file checkpoint: a JSON header followed by raw little-endian float blobs.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace advsdg {

struct ParameterBlob {
    std::string name;  // "<group>/<parameter>", groups: synth1, synth2, segmenter, encoder
    std::array<int, 4> shape{};
    std::vector<float> values;

    friend bool operator==(const ParameterBlob&, const ParameterBlob&) = default;
};

struct Checkpoint {
    std::int64_t step = 0;
    std::uint64_t config_hash = 0;
    double val_dice = 0.0;
    int num_classes = 0;
    /// Canonical resolved config, enough to rebuild every network.
    std::string config_text;
    std::map<std::string, double> metrics;
    /// Empty for entries whose parameters were released to save memory.
    std::vector<ParameterBlob> blobs;

    [[nodiscard]] bool has_parameters() const noexcept { return !blobs.empty(); }
    [[nodiscard]] const ParameterBlob& blob(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws IoError for unreadable, truncated or corrupted files.
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Highest val_dice, ties resolved towards the later step. Throws ValueError when empty.
[[nodiscard]] const Checkpoint& select_checkpoint(const std::vector<Checkpoint>& checkpoints);

}  // namespace advsdg
