// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "advsdg/random.hpp"

namespace advsdg {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(std::string_view text, std::string_view origin) {
    Config cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = std::string(origin) + ":" + std::to_string(line_no);
        if (eq == std::string_view::npos) throw ConfigError(std::string(line), where + ": expected `key = value`");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError("", where + ": empty key");
        if (cfg.values_.contains(key)) throw ConfigError(key, where + ": duplicate key '" + key + "'");
        cfg.values_[key] = std::string(trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::string Config::serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::uint64_t Config::hash() const { return fnv1a(serialize()); }

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "missing config key '" + key + "'");
    return it->second;
}

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string_view to_string(Mode m) noexcept {
    switch (m) {
        case Mode::kFull: return "FULL";
        case Mode::kNoAdversarial: return "NO_ADVERSARIAL";
        case Mode::kNoMi: return "NO_MI";
        case Mode::kErm: return "ERM";
        case Mode::kCutout: return "CUTOUT";
        case Mode::kGin: return "GIN";
    }
    return "FULL";
}

Mode parse_mode(std::string_view s) {
    for (Mode m : {Mode::kFull, Mode::kNoAdversarial, Mode::kNoMi, Mode::kErm, Mode::kCutout, Mode::kGin}) {
        if (to_string(m) == s) return m;
    }
    throw ValueError("unknown mode '" + std::string(s) +
                     "' (expected FULL, NO_ADVERSARIAL, NO_MI, ERM, CUTOUT or GIN)");
}

namespace {

// Shortest text that parses back to the same double.
std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ConfigError(key, "config key '" + key + "': expected a number, got '" + s + "'");
    }
    return v;
}

template <typename I>
I parse_int(const std::string& key, const std::string& s) {
    I v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError(key, "config key '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key, "config key '" + key + "': expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const auto item = trim(std::string_view(s).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

struct Field {
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string& key, const std::string&)> set;
};

template <typename M>
Field num(M TrainConfig::*member) {
    return {[member](const TrainConfig& c) { return format_double(c.*member); },
            [member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); }};
}

template <typename Getter>
Field dbl(Getter ref) {
    return {[ref](const TrainConfig& c) { return format_double(ref(const_cast<TrainConfig&>(c))); },
            [ref](TrainConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); }};
}

template <typename Getter>
Field integer(Getter ref) {
    return {[ref](const TrainConfig& c) { return std::to_string(ref(const_cast<TrainConfig&>(c))); },
            [ref](TrainConfig& c, const std::string& k, const std::string& v) {
                using I = std::remove_reference_t<decltype(ref(c))>;
                ref(c) = parse_int<I>(k, v);
            }};
}

template <typename Getter>
Field boolean(Getter ref) {
    return {[ref](const TrainConfig& c) { return std::string(ref(const_cast<TrainConfig&>(c)) ? "true" : "false"); },
            [ref](TrainConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_bool(k, v); }};
}

template <typename Getter>
Field text(Getter ref) {
    return {[ref](const TrainConfig& c) { return std::string(ref(const_cast<TrainConfig&>(c))); },
            [ref](TrainConfig& c, const std::string&, const std::string& v) { ref(c) = v; }};
}

template <typename E>
Field choice(E TrainConfig::*member, std::vector<std::pair<E, std::string>> names) {
    return {[member, names](const TrainConfig& c) {
                for (const auto& [e, n] : names) {
                    if (e == c.*member) return n;
                }
                return std::string();
            },
            [member, names](TrainConfig& c, const std::string& k, const std::string& v) {
                std::string options;
                for (const auto& [e, n] : names) {
                    if (n == v) {
                        c.*member = e;
                        return;
                    }
                    options += (options.empty() ? "" : ", ") + n;
                }
                throw ConfigError(k, "config key '" + k + "': '" + v + "' is not one of " + options);
            }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        f["trainer.mode"] = {[](const TrainConfig& c) { return std::string(to_string(c.mode)); },
                             [](TrainConfig& c, const std::string& k, const std::string& v) {
                                 try {
                                     c.mode = parse_mode(v);
                                 } catch (const ValueError& e) {
                                     throw ConfigError(k, "config key '" + k + "': " + e.what());
                                 }
                             }};
        f["trainer.epochs"] = integer([](TrainConfig& c) -> int& { return c.epochs; });
        f["trainer.batch_size"] = integer([](TrainConfig& c) -> int& { return c.batch_size; });
        f["trainer.lr"] = num(&TrainConfig::lr);
        f["trainer.adam_beta1"] = num(&TrainConfig::beta1);
        f["trainer.adam_beta2"] = num(&TrainConfig::beta2);
        f["trainer.lr_schedule"] = {
            [](const TrainConfig& c) { return std::string(c.lr_linear_decay ? "linear" : "constant"); },
            [](TrainConfig& c, const std::string& k, const std::string& v) {
                if (v != "linear" && v != "constant") {
                    throw ConfigError(k, "config key '" + k + "': expected linear or constant, got '" + v + "'");
                }
                c.lr_linear_decay = v == "linear";
            }};
        f["trainer.seed"] = integer([](TrainConfig& c) -> std::uint64_t& { return c.seed; });
        f["trainer.val_every"] = integer([](TrainConfig& c) -> int& { return c.val_every; });
        f["trainer.grad_clip"] = num(&TrainConfig::grad_clip);
        f["trainer.alpha_mode"] = choice(&TrainConfig::alpha_mode, {{AlphaMode::kBatch, "batch"},
                                                                     {AlphaMode::kSample, "sample"}});
        f["trainer.independent_noise"] = boolean([](TrainConfig& c) -> bool& { return c.independent_noise; });
        f["trainer.w_sup"] = num(&TrainConfig::w_sup);
        f["trainer.w_cons"] = num(&TrainConfig::w_cons);
        f["trainer.w_mi"] = num(&TrainConfig::w_mi);
        f["trainer.soft_dice"] = boolean([](TrainConfig& c) -> bool& { return c.soft_dice; });
        f["trainer.crop"] = integer([](TrainConfig& c) -> int& { return c.crop; });
        f["trainer.max_steps"] = integer([](TrainConfig& c) -> int& { return c.max_steps; });

        f["synth.hidden_channels"] = integer([](TrainConfig& c) -> int& { return c.synth.hidden_channels; });
        f["synth.blocks"] = integer([](TrainConfig& c) -> int& { return c.synth.blocks; });
        f["synth.leaky_slope"] = dbl([](TrainConfig& c) -> double& { return c.synth.leaky_slope; });
        f["synth.restyle_output"] = boolean([](TrainConfig& c) -> bool& { return c.synth.restyle_output; });

        f["mi.tau"] = num(&TrainConfig::tau);
        f["mi.patches"] = integer([](TrainConfig& c) -> int& { return c.patches; });
        f["mi.negatives"] = choice(&TrainConfig::negatives, {{mi::NegativeForm::kQueryVsSource, "query"},
                                                             {mi::NegativeForm::kSourceVsSource, "literal"}});
        f["mi.critic"] = choice(&TrainConfig::critic, {{CriticMode::kMaximize, "maximize"},
                                                       {CriticMode::kMinimize, "minimize"}});
        f["mi.embed_dim"] = integer([](TrainConfig& c) -> int& { return c.encoder.embed_dim; });
        f["mi.widths"] = {[](const TrainConfig& c) {
                              const auto& w = c.encoder.widths;
                              return std::to_string(w[0]) + "," + std::to_string(w[1]) + "," + std::to_string(w[2]);
                          },
                          [](TrainConfig& c, const std::string& k, const std::string& v) {
                              const auto items = split_list(v);
                              if (items.size() != 3) {
                                  throw ConfigError(k, "config key '" + k + "': expected three comma-separated widths");
                              }
                              for (int i = 0; i < 3; ++i) c.encoder.widths[i] = parse_int<int>(k, items[i]);
                          }};
        f["mi.leaky_slope"] = dbl([](TrainConfig& c) -> double& { return c.encoder.leaky_slope; });

        f["seg.stages"] = integer([](TrainConfig& c) -> int& { return c.segmenter.stages; });
        f["seg.base_width"] = integer([](TrainConfig& c) -> int& { return c.segmenter.base_width; });
        f["seg.convs_per_stage"] = integer([](TrainConfig& c) -> int& { return c.segmenter.convs_per_stage; });
        f["seg.leaky_slope"] = dbl([](TrainConfig& c) -> double& { return c.segmenter.leaky_slope; });

        f["data.root"] = text([](TrainConfig& c) -> std::string& { return c.data_root; });
        f["data.source"] = text([](TrainConfig& c) -> std::string& { return c.source; });
        f["data.targets"] = {[](const TrainConfig& c) { return join_list(c.targets); },
                             [](TrainConfig& c, const std::string&, const std::string& v) { c.targets = split_list(v); }};
        f["data.toy_samples"] = integer([](TrainConfig& c) -> int& { return c.toy_samples; });
        f["data.toy_size"] = integer([](TrainConfig& c) -> int& { return c.toy.size; });
        f["data.toy_label_by_kind"] = boolean([](TrainConfig& c) -> bool& { return c.toy.label_by_kind; });
        f["data.split_ratio"] = num(&TrainConfig::split_ratio);
        f["data.resize"] = integer([](TrainConfig& c) -> int& { return c.resize; });

        f["augment.enabled"] = boolean([](TrainConfig& c) -> bool& { return c.augment; });
        f["augment.p_gamma"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.p_gamma; });
        f["augment.gamma_min"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.gamma_min; });
        f["augment.gamma_max"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.gamma_max; });
        f["augment.p_noise"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.p_noise; });
        f["augment.noise_std"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.noise_std; });
        f["augment.p_affine"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.p_affine; });
        f["augment.rotate_deg"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.rotate_deg; });
        f["augment.scale"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.scale; });
        f["augment.translate"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.translate; });
        f["augment.p_elastic"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.p_elastic; });
        f["augment.elastic_sigma"] = dbl([](TrainConfig& c) -> double& { return c.augment_options.elastic_sigma; });
        f["augment.elastic_magnitude"] =
            dbl([](TrainConfig& c) -> double& { return c.augment_options.elastic_magnitude; });

        f["eval.empty_dice"] = choice(&TrainConfig::empty_dice, {{EmptyDice::kOne, "one"}, {EmptyDice::kSkip, "skip"}});

        f["output.dir"] = text([](TrainConfig& c) -> std::string& { return c.output_dir; });
        f["output.save_all_checkpoints"] = boolean([](TrainConfig& c) -> bool& { return c.save_all_checkpoints; });
        return f;
    }();
    return table;
}

}  // namespace

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* key, const std::string& what) {
        if (!ok) throw ConfigError(key, std::string("config key '") + key + "': " + what);
    };
    require(epochs >= 1, "trainer.epochs", "must be at least 1");
    require(batch_size >= 1, "trainer.batch_size", "must be at least 1");
    require(lr > 0.0, "trainer.lr", "must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0, "trainer.adam_beta1", "must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "trainer.adam_beta2", "must lie in [0, 1)");
    require(val_every >= 0, "trainer.val_every", "must be non-negative");
    require(grad_clip >= 0.0, "trainer.grad_clip", "must be non-negative");
    require(crop == 0 || crop >= 8, "trainer.crop", "must be 0 or at least 8");
    require(max_steps >= 0, "trainer.max_steps", "must be non-negative");
    require(tau > 0.0, "mi.tau", "must be positive");
    require(patches >= 2, "mi.patches", "must be at least 2");
    require(encoder.embed_dim >= 1, "mi.embed_dim", "must be positive");
    require(encoder.widths[0] >= 1 && encoder.widths[1] >= 1 && encoder.widths[2] >= 1, "mi.widths",
            "must be positive");
    require(synth.hidden_channels >= 1, "synth.hidden_channels", "must be positive");
    require(synth.blocks >= 1, "synth.blocks", "must be positive");
    require(segmenter.stages >= 1, "seg.stages", "must be at least 1");
    require(segmenter.base_width >= 1, "seg.base_width", "must be positive");
    require(segmenter.convs_per_stage >= 1, "seg.convs_per_stage", "must be positive");
    require(!source.empty(), "data.source", "must name a domain");
    require(toy_samples >= 2, "data.toy_samples", "must be at least 2");
    require(toy.size >= 8, "data.toy_size", "must be at least 8");
    require(split_ratio > 0.0 && split_ratio < 1.0, "data.split_ratio", "must lie in (0, 1)");
    require(resize >= 0, "data.resize", "must be non-negative");
    for (const auto& [key, p] : {std::pair{"augment.p_gamma", augment_options.p_gamma},
                                 std::pair{"augment.p_noise", augment_options.p_noise},
                                 std::pair{"augment.p_affine", augment_options.p_affine},
                                 std::pair{"augment.p_elastic", augment_options.p_elastic}}) {
        require(p >= 0.0 && p <= 1.0, key, "probability must lie in [0, 1]");
    }
    require(augment_options.gamma_min > 0.0 && augment_options.gamma_min <= augment_options.gamma_max,
            "augment.gamma_min", "must satisfy 0 < gamma_min <= gamma_max");
}

TrainConfig train_config_from(const Config& config) {
    TrainConfig out;
    const auto& table = fields();
    for (const auto& [key, value] : config.values()) {
        auto it = table.find(key);
        if (it == table.end()) throw ConfigError(key, "unknown config key '" + key + "'");
        it->second.set(out, key, value);
    }
    out.validate();
    return out;
}

Config to_config(const TrainConfig& config) {
    Config out;
    for (const auto& [key, field] : fields()) out.set(key, field.get(config));
    return out;
}

std::uint64_t config_hash(const TrainConfig& config) { return to_config(config).hash(); }

}  // namespace advsdg
