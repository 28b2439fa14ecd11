// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "advsdg/parallel.hpp"
#include "advsdg/trainer.hpp"

namespace advsdg::eval {

namespace {

struct Counts {
    std::int64_t inter = 0, pred = 0, gt = 0;
};

double dice_from(const Counts& c, EmptyDice empty) {
    if (c.pred + c.gt == 0) return empty == EmptyDice::kOne ? 1.0 : std::nan("");
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.gt);
}

Counts count(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, int k) {
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == k;
        const bool g = gt[i] == k;
        c.inter += p && g;
        c.pred += p;
        c.gt += g;
    }
    return c;
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_number(std::string_view s) {
    if (s == "nan") return std::nan("");
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValueError("results table: malformed number '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.push_back(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

double nan_mean(const std::vector<double>& v) {
    double sum = 0.0;
    int n = 0;
    for (double x : v) {
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    }
    return n ? sum / n : std::nan("");
}

}  // namespace

double dice_score(const LabelMask& pred, const LabelMask& gt, int k, EmptyDice empty) {
    if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) throw ShapeError("dice_score: mask shapes differ");
    return dice_from(count(pred.labels, gt.labels, k), empty);
}

double dice_score(const Mask& pred, const Mask& gt, int k, EmptyDice empty) {
    if (!pred.same_shape(gt)) throw ShapeError("dice_score: mask shapes differ");
    return dice_from(count(pred.v, gt.v, k), empty);
}

std::vector<Mask> predict_masks(const seg::Segmenter<Real>& model, const std::vector<data::Sample>& samples,
                                int batch_size) {
    // Consecutive runs of equal shape, cut into batches.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    std::size_t begin = 0;
    while (begin < samples.size()) {
        std::size_t end = begin + 1;
        while (end < samples.size() && end - begin < static_cast<std::size_t>(std::max(1, batch_size)) &&
               samples[end].image.same_shape(samples[begin].image)) {
            ++end;
        }
        batches.emplace_back(begin, end);
        begin = end;
    }
    std::vector<Mask> out(samples.size());
    parallel_for(batches.size(), worker_count(), [&](std::size_t b) {
        const auto [lo, hi] = batches[b];
        std::vector<const data::Sample*> members;
        for (std::size_t i = lo; i < hi; ++i) members.push_back(&samples[i]);
        const Batch batch = make_batch(members);
        const LabelMask pred = seg::predict_mask(model.forward(batch.images));
        for (std::size_t i = lo; i < hi; ++i) {
            Mask m(pred.h, pred.w);
            const auto s = pred.slice(static_cast<int>(i - lo));
            std::copy(s.begin(), s.end(), m.v.begin());
            out[i] = std::move(m);
        }
    });
    return out;
}

std::vector<double> per_class_dice(const std::vector<Mask>& predictions, const std::vector<data::Sample>& samples,
                                   int num_classes, EmptyDice empty) {
    if (predictions.size() != samples.size()) throw ShapeError("per_class_dice: prediction count mismatch");
    // Group by volume id in order of first appearance.
    std::vector<std::vector<std::size_t>> groups;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string& vid = samples[i].volume_id;
        if (vid.empty()) {
            groups.push_back({i});
            continue;
        }
        auto [it, inserted] = index.try_emplace(vid, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    std::vector<double> out;
    for (int k = 1; k < num_classes; ++k) {
        std::vector<double> scores;
        for (const auto& g : groups) {
            Counts total;
            for (std::size_t i : g) {
                if (!predictions[i].same_shape(samples[i].mask)) throw ShapeError("per_class_dice: mask shapes differ");
                const Counts c = count(predictions[i].v, samples[i].mask.v, k);
                total.inter += c.inter;
                total.pred += c.pred;
                total.gt += c.gt;
            }
            scores.push_back(dice_from(total, empty));
        }
        out.push_back(nan_mean(scores));
    }
    return out;
}

double mean_foreground_dice(const seg::Segmenter<Real>& model, const std::vector<data::Sample>& samples,
                            int num_classes, EmptyDice empty) {
    return nan_mean(per_class_dice(predict_masks(model, samples), samples, num_classes, empty));
}

// ---------------------------------------------------------------------------
// ResultsTable

ResultsTable::ResultsTable(std::vector<std::string> domains, std::vector<std::string> class_names)
    : domains_(std::move(domains)), class_names_(std::move(class_names)) {}

std::size_t ResultsTable::column_count() const noexcept { return domains_.size() * (class_names_.size() + 1) + 1; }

std::vector<std::string> ResultsTable::column_names() const {
    std::vector<std::string> out;
    for (const auto& d : domains_) {
        for (const auto& c : class_names_) out.push_back(d + "/" + c);
        out.push_back(d + "/avg");
    }
    out.emplace_back("average");
    return out;
}

void ResultsTable::add_row(const std::string& method, const std::vector<std::vector<double>>& cells,
                           const std::vector<std::vector<double>>& stddev) {
    const std::size_t k = class_names_.size();
    auto flatten = [&](const std::vector<std::vector<double>>& grid) {
        if (grid.size() != domains_.size()) throw ShapeError("results table: one cell row per domain expected");
        std::vector<double> v;
        std::vector<double> domain_avgs;
        for (const auto& d : grid) {
            if (d.size() != k) throw ShapeError("results table: one cell per foreground class expected");
            v.insert(v.end(), d.begin(), d.end());
            domain_avgs.push_back(nan_mean(d));
            v.push_back(domain_avgs.back());
        }
        v.push_back(nan_mean(domain_avgs));
        return v;
    };
    Row row{method, flatten(cells), {}};
    if (!stddev.empty()) {
        row.stddev = flatten(stddev);
        // Spread of an average is not the average of spreads; only cells carry one.
        for (std::size_t d = 0; d < domains_.size(); ++d) row.stddev[d * (k + 1) + k] = std::nan("");
        row.stddev.back() = std::nan("");
    }
    rows_.push_back(std::move(row));
}

const ResultsTable::Row& ResultsTable::row(const std::string& method) const {
    for (const auto& r : rows_) {
        if (r.method == method) return r;
    }
    throw ValueError("results table has no row '" + method + "'");
}

double ResultsTable::average(const std::string& method) const { return row(method).values.back(); }

bool ResultsTable::averages_consistent(double tol) const {
    const std::size_t k = class_names_.size();
    for (const auto& r : rows_) {
        if (r.values.size() != column_count()) return false;
        std::vector<double> avgs;
        for (std::size_t d = 0; d < domains_.size(); ++d) {
            const auto first = r.values.begin() + static_cast<std::ptrdiff_t>(d * (k + 1));
            const double avg = nan_mean(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(k)));
            const double stored = r.values[d * (k + 1) + k];
            if (std::isnan(avg) != std::isnan(stored) || (!std::isnan(avg) && std::abs(avg - stored) > tol)) return false;
            avgs.push_back(stored);
        }
        const double overall = nan_mean(avgs);
        const double stored = r.values.back();
        if (std::isnan(overall) != std::isnan(stored) || (!std::isnan(overall) && std::abs(overall - stored) > tol)) {
            return false;
        }
    }
    return true;
}

std::string ResultsTable::to_tsv() const {
    std::string out = "# seeds=";
    for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash));
    out += "\tconfig_hash=" + std::string(hash) + "\tdomains=";
    for (std::size_t i = 0; i < domains_.size(); ++i) out += (i ? "," : "") + domains_[i];
    out += "\tclasses=";
    for (std::size_t i = 0; i < class_names_.size(); ++i) out += (i ? "," : "") + class_names_[i];
    out += "\nmethod";
    for (const auto& c : column_names()) out += "\t" + c;
    out += "\n";
    for (const auto& r : rows_) {
        out += r.method;
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            out += "\t" + format_number(r.values[i]);
            if (!r.stddev.empty() && !std::isnan(r.stddev[i])) out += "+-" + format_number(r.stddev[i]);
        }
        out += "\n";
    }
    return out;
}

std::string ResultsTable::to_text() const {
    const auto names = column_names();
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"method"});
    grid.back().insert(grid.back().end(), names.begin(), names.end());
    for (const auto& r : rows_) {
        std::vector<std::string> line{r.method};
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            char buf[64];
            if (!r.stddev.empty() && !std::isnan(r.stddev[i])) {
                std::snprintf(buf, sizeof(buf), "%.2f +- %.2f", r.values[i], r.stddev[i]);
            } else {
                std::snprintf(buf, sizeof(buf), "%.2f", r.values[i]);
            }
            line.emplace_back(buf);
        }
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> width(grid.front().size(), 0);
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::string out;
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            const std::string pad(width[i] - line[i].size(), ' ');
            out += i == 0 ? line[i] + pad : "  " + pad + line[i];
        }
        out += "\n";
    }
    return out;
}

void ResultsTable::write_tsv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << to_tsv();
    if (!out) throw IoError("cannot write results table " + path.string());
}

ResultsTable ResultsTable::parse_tsv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ValueError("results table: missing metadata line");
    ResultsTable t;
    for (const auto& field : split(line.substr(2), '\t')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ValueError("results table: malformed metadata '" + field + "'");
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        std::vector<std::string> items = value.empty() ? std::vector<std::string>{} : split(value, ',');
        if (key == "seeds") {
            for (const auto& s : items) t.seeds.push_back(std::stoull(s));
        } else if (key == "config_hash") {
            t.config_hash = std::stoull(value, nullptr, 16);
        } else if (key == "domains") {
            t.domains_ = items;
        } else if (key == "classes") {
            t.class_names_ = items;
        }
    }
    if (!std::getline(in, line)) throw ValueError("results table: missing header");
    const auto header = split(line, '\t');
    if (header.size() != t.column_count() + 1 || header.front() != "method") {
        throw ValueError("results table: header does not match the domain and class metadata");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, '\t');
        if (cells.size() != header.size()) throw ValueError("results table: ragged row '" + cells.front() + "'");
        Row r{cells.front(), {}, {}};
        bool any_std = false;
        std::vector<double> stds;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            const auto pm = cells[i].find("+-");
            r.values.push_back(parse_number(cells[i].substr(0, pm)));
            if (pm != std::string::npos) {
                stds.push_back(parse_number(cells[i].substr(pm + 2)));
                any_std = true;
            } else {
                stds.push_back(std::nan(""));
            }
        }
        if (any_std) r.stddev = std::move(stds);
        t.rows_.push_back(std::move(r));
    }
    return t;
}

ResultsTable ResultsTable::read_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read results table " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_tsv(ss.str());
}

bool operator==(const ResultsTable& a, const ResultsTable& b) {
    auto same = [](const std::vector<double>& x, const std::vector<double>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i] == y[i] || (std::isnan(x[i]) && std::isnan(y[i])))) return false;
        }
        return true;
    };
    if (a.domains_ != b.domains_ || a.class_names_ != b.class_names_ || a.seeds != b.seeds ||
        a.config_hash != b.config_hash || a.rows_.size() != b.rows_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.rows_.size(); ++i) {
        if (a.rows_[i].method != b.rows_[i].method || !same(a.rows_[i].values, b.rows_[i].values) ||
            !same(a.rows_[i].stddev, b.rows_[i].stddev)) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> foreground_names(const std::vector<std::string>& names, int num_classes) {
    if (static_cast<int>(names.size()) == num_classes) return {names.begin() + 1, names.end()};
    if (static_cast<int>(names.size()) == num_classes - 1) return names;
    std::vector<std::string> out;
    for (int k = 1; k < num_classes; ++k) out.push_back("class" + std::to_string(k));
    return out;
}

}  // namespace

ResultsTable evaluate_cross_domain(const Checkpoint& checkpoint, const std::vector<Domain>& domains,
                                   const std::vector<std::string>& class_names, EmptyDice empty) {
    if (domains.empty()) throw ValueError("evaluate_cross_domain: no target domains");
    const int k = checkpoint.num_classes;
    for (const auto& d : domains) {
        if (d.num_classes != k) {
            throw ValueError("domain '" + d.name + "' has " + std::to_string(d.num_classes) +
                             " classes, the checkpoint was trained with " + std::to_string(k));
        }
        if (d.samples.empty()) throw ValueError("domain '" + d.name + "' has no samples");
    }
    const Trainer trainer = Trainer::from_checkpoint(checkpoint);
    std::vector<std::string> names;
    for (const auto& d : domains) names.push_back(d.name);
    ResultsTable table(names, foreground_names(class_names, k));
    std::vector<std::vector<double>> cells;
    for (const auto& d : domains) {
        auto dice = per_class_dice(predict_masks(trainer.segmenter(), d.samples), d.samples, k, empty);
        for (double& v : dice) v *= 100.0;
        cells.push_back(std::move(dice));
    }
    table.add_row(std::string(to_string(trainer.config().mode)), cells);
    table.config_hash = checkpoint.config_hash;
    table.seeds = {trainer.config().seed};
    return table;
}

ResultsTable run_ablation(const TrainConfig& base_config, const data::DatasetSplit& split, int num_classes,
                          const std::vector<Domain>& targets, const AblationOptions& options,
                          const std::vector<std::string>& class_names) {
    if (options.modes.empty()) throw ValueError("run_ablation: no modes");
    if (options.seeds.empty()) throw ValueError("run_ablation: no seeds");
    if (targets.empty()) throw ValueError("run_ablation: no target domains");
    const std::size_t n_seeds = options.seeds.size();
    const std::size_t jobs = options.modes.size() * n_seeds;
    std::vector<ResultsTable> tables(jobs);
    std::mutex report_mutex;
    const int workers = options.workers > 0 ? options.workers : worker_count();
    parallel_for(jobs, workers, [&](std::size_t j) {
        TrainConfig cfg = base_config;
        cfg.mode = options.modes[j / n_seeds];
        cfg.seed = options.seeds[j % n_seeds];
        const TrainResult result = run_training(cfg, split, num_classes);
        tables[j] = evaluate_cross_domain(result.best(), targets, class_names, cfg.empty_dice);
        if (options.on_run) {
            std::lock_guard lock(report_mutex);
            options.on_run(cfg.mode, cfg.seed, tables[j]);
        }
    });

    std::vector<std::string> names;
    for (const auto& d : targets) names.push_back(d.name);
    ResultsTable out(names, tables.front().class_names());
    out.seeds = options.seeds;
    TrainConfig hashed = base_config;
    hashed.seed = 0;
    hashed.mode = Mode::kFull;
    out.config_hash = config_hash(hashed);
    const std::size_t k = out.class_names().size();
    for (std::size_t m = 0; m < options.modes.size(); ++m) {
        std::vector<std::vector<double>> mean(names.size(), std::vector<double>(k, 0.0));
        std::vector<std::vector<double>> sd(names.size(), std::vector<double>(k, 0.0));
        for (std::size_t d = 0; d < names.size(); ++d) {
            for (std::size_t c = 0; c < k; ++c) {
                std::vector<double> v;
                for (std::size_t s = 0; s < n_seeds; ++s) v.push_back(tables[m * n_seeds + s].rows()[0].values[d * (k + 1) + c]);
                const double mu = nan_mean(v);
                double ss = 0.0;
                int cnt = 0;
                for (double x : v) {
                    if (!std::isnan(x)) {
                        ss += (x - mu) * (x - mu);
                        ++cnt;
                    }
                }
                mean[d][c] = mu;
                sd[d][c] = cnt ? std::sqrt(ss / cnt) : std::nan("");
            }
        }
        out.add_row(std::string(to_string(options.modes[m])), mean, n_seeds > 1 ? sd : std::vector<std::vector<double>>{});
    }
    return out;
}

}  // namespace advsdg::eval
