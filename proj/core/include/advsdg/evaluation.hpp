// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Dice, cross-domain evaluation and the ablation harness.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "advsdg/checkpoint.hpp"
#include "advsdg/config.hpp"
#include "advsdg/data.hpp"
#include "advsdg/segmenter.hpp"

namespace advsdg::eval {

/// 2|P_k & G_k| / (|P_k| + |G_k|). Both sets empty gives 1, or NaN under EmptyDice::kSkip.
[[nodiscard]] double dice_score(const LabelMask& pred, const LabelMask& gt, int k,
                                EmptyDice empty = EmptyDice::kOne);
[[nodiscard]] double dice_score(const Mask& pred, const Mask& gt, int k, EmptyDice empty = EmptyDice::kOne);

/// Argmax masks for every sample, batched, in input order.
[[nodiscard]] std::vector<Mask> predict_masks(const seg::Segmenter<Real>& model, const std::vector<data::Sample>& samples,
                                              int batch_size = 8);

/// Mean Dice per foreground class (index k-1 holds class k). Samples sharing a
/// volume id are stacked into one volume before scoring; per-volume scores are
/// then averaged. NaN entries (skipped empties) are left out of the mean.
[[nodiscard]] std::vector<double> per_class_dice(const std::vector<Mask>& predictions,
                                                 const std::vector<data::Sample>& samples, int num_classes,
                                                 EmptyDice empty = EmptyDice::kOne);

/// Mean over foreground classes of per_class_dice.
[[nodiscard]] double mean_foreground_dice(const seg::Segmenter<Real>& model, const std::vector<data::Sample>& samples,
                                          int num_classes, EmptyDice empty = EmptyDice::kOne);

struct Domain {
    std::string name;
    std::vector<data::Sample> samples;
    int num_classes = 2;
};

/// Rows are methods; per domain there is one cell per foreground class plus the
/// domain average, and a final overall average. Values are Dice in percent.
class ResultsTable {
public:
    struct Row {
        std::string method;
        std::vector<double> values;
        std::vector<double> stddev;  // empty for single-seed rows
    };

    ResultsTable() = default;
    ResultsTable(std::vector<std::string> domains, std::vector<std::string> class_names);

    [[nodiscard]] const std::vector<std::string>& domains() const noexcept { return domains_; }
    [[nodiscard]] const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    [[nodiscard]] const std::vector<Row>& rows() const noexcept { return rows_; }
    [[nodiscard]] std::vector<std::string> column_names() const;
    [[nodiscard]] std::size_t column_count() const noexcept;

    /// `cells[d][c]` for domain d and foreground class c; averages are derived.
    void add_row(const std::string& method, const std::vector<std::vector<double>>& cells,
                 const std::vector<std::vector<double>>& stddev = {});
    [[nodiscard]] const Row& row(const std::string& method) const;
    /// Mean over target domains of the domain averages.
    [[nodiscard]] double average(const std::string& method) const;

    /// Every average equals the mean of its cells within tol.
    [[nodiscard]] bool averages_consistent(double tol = 1e-6) const;

    std::vector<std::uint64_t> seeds;
    std::uint64_t config_hash = 0;

    [[nodiscard]] std::string to_tsv() const;
    [[nodiscard]] std::string to_text() const;
    void write_tsv(const std::filesystem::path& path) const;
    [[nodiscard]] static ResultsTable parse_tsv(const std::string& text);
    [[nodiscard]] static ResultsTable read_tsv(const std::filesystem::path& path);

    friend bool operator==(const ResultsTable& a, const ResultsTable& b);

private:
    std::vector<std::string> domains_;
    std::vector<std::string> class_names_;
    std::vector<Row> rows_;
};

/// Rebuilds the segmenter of `checkpoint` and scores each domain. Throws
/// ValueError for an empty domain list or a class-count mismatch.
[[nodiscard]] ResultsTable evaluate_cross_domain(const Checkpoint& checkpoint, const std::vector<Domain>& domains,
                                                 const std::vector<std::string>& class_names = {},
                                                 EmptyDice empty = EmptyDice::kOne);

struct AblationOptions {
    std::vector<Mode> modes;
    std::vector<std::uint64_t> seeds = {0};
    /// Concurrent (mode, seed) runs; 0 = worker_count().
    int workers = 0;
    std::function<void(Mode, std::uint64_t, const ResultsTable&)> on_run;
};

/// Trains every (mode, seed) pair on the same split and reports mean and
/// population std over seeds per mode. A mode listed twice yields two identical rows.
[[nodiscard]] ResultsTable run_ablation(const TrainConfig& base_config, const data::DatasetSplit& split,
                                        int num_classes, const std::vector<Domain>& targets,
                                        const AblationOptions& options,
                                        const std::vector<std::string>& class_names = {});

}  // namespace advsdg::eval
