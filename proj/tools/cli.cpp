// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "advsdg/checkpoint.hpp"
#include "advsdg/dataset_io.hpp"
#include "advsdg/errors.hpp"
#include "advsdg/evaluation.hpp"
#include "advsdg/experiment.hpp"
#include "advsdg/random.hpp"
#include "advsdg/synthesizer.hpp"
#include "advsdg/trainer.hpp"

#ifndef ADVSDG_VERSION
#define ADVSDG_VERSION "0.0.0"
#endif
#ifndef ADVSDG_GIT_STAMP
#define ADVSDG_GIT_STAMP "unknown"
#endif

namespace advsdg::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("short write to " + path.string());
}

/// `--key value` and `--key=value` pairs left over after option parsing.
Config parse_overrides(const std::vector<std::string>& extras) {
    Config out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
            throw ConfigError(arg, "unexpected argument '" + arg + "', overrides take the form --key value");
        }
        const std::string body = arg.substr(2);
        if (const auto eq = body.find('='); eq != std::string::npos) {
            out.set(body.substr(0, eq), body.substr(eq + 1));
        } else if (i + 1 < extras.size()) {
            out.set(body, extras[++i]);
        } else {
            throw ConfigError(body, "override --" + body + " has no value");
        }
    }
    return out;
}

/// File values, then command-line overrides. Unknown keys are rejected here.
TrainConfig resolve_config(const std::string& config_path, const Config& overrides) {
    Config merged;
    if (!config_path.empty()) {
        try {
            merged = Config::load(config_path);
        } catch (const IoError& e) {
            throw ConfigError("--config", e.what());
        }
    }
    merged.merge(overrides);
    TrainConfig cfg = train_config_from(merged);
    cfg.validate();
    return cfg;
}

TrainConfig config_of(const Checkpoint& ckpt) {
    return train_config_from(Config::parse(ckpt.config_text, "checkpoint"));
}

json report_json(const StepRecord& r) {
    json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["sup_1"] = r.report.sup_1;
    j["sup_2"] = r.report.sup_2;
    j["cons"] = r.report.cons;
    j["mi_1"] = r.report.mi_1;
    j["mi_2"] = r.report.mi_2;
    j["seg_total"] = r.report.seg_total();
    j["adv_total"] = r.report.adv_total();
    j["skipped"] = r.report.skipped;
    return j;
}

std::string step_name(std::int64_t step) {
    std::ostringstream s;
    s << "step_" << std::setw(8) << std::setfill('0') << step << ".ckpt";
    return s.str();
}

/// Image files of a directory (or its images/ subdirectory), sorted by name.
std::vector<fs::path> list_images(const fs::path& dir) {
    fs::path root = dir;
    if (fs::is_directory(dir / "images")) root = dir / "images";
    if (!fs::is_directory(root)) throw IoError("input directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(root)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".png" || ext == ".tif" || ext == ".tiff")) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no .png/.tif images in " + root.string());
    return out;
}

Tensor<Real> as_tensor(const Image& img) {
    Tensor<Real> t(1, 1, img.h, img.w);
    std::copy(img.v.begin(), img.v.end(), t.data());
    return t;
}

Image as_image(const Tensor<Real>& t) {
    Image img(t.h(), t.w());
    std::copy(t.data(), t.data() + img.size(), img.v.begin());
    return img;
}

void paste(Image& canvas, const Image& tile, int ty, int tx, double lo, double hi) {
    const double range = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < tile.h; ++y) {
        for (int x = 0; x < tile.w; ++x) {
            canvas.at(ty + y, tx + x) = static_cast<Real>(std::clamp((tile.at(y, x) - lo) / range, 0.0, 1.0));
        }
    }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string mode;
    std::string out;
    std::string seed;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& extras, std::ostream& out) {
    Config overrides = parse_overrides(extras);
    if (!a.mode.empty()) overrides.set("trainer.mode", a.mode);
    if (!a.seed.empty()) overrides.set("trainer.seed", a.seed);
    if (!a.out.empty()) overrides.set("output.dir", a.out);
    const TrainConfig cfg = resolve_config(a.config, overrides);

    RunManifest manifest;
    manifest.command = "train";
    manifest.config = to_config(cfg);
    manifest.seed = cfg.seed;
    manifest.version = version_stamp();
    manifest.start_time = utc_now();
    manifest.output_dir = cfg.output_dir;

    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.txt", manifest.config.serialize());
    write_text(dir / "manifest.json", manifest.to_json());

    const ExperimentData data = prepare_experiment(cfg, false);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    std::ofstream timing(dir / "timing.jsonl", std::ios::binary);
    if (!metrics || !timing) throw IoError("cannot write logs under " + dir.string());

    double best = -1.0;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) {
        metrics << report_json(r).dump() << '\n';
        timing << json{{"step", r.step}, {"wall_seconds", r.wall_seconds}}.dump() << '\n';
    };
    hooks.on_checkpoint = [&](const Checkpoint& c) {
        metrics << json{{"step", c.step}, {"val_dice", c.val_dice}}.dump() << '\n';
        metrics.flush();
        if (cfg.save_all_checkpoints) save_checkpoint(dir / "checkpoints" / step_name(c.step), c);
        if (c.val_dice >= best) {
            best = c.val_dice;
            save_checkpoint(dir / "best.ckpt", c);
        }
    };
    if (cfg.save_all_checkpoints) fs::create_directories(dir / "checkpoints");

    const TrainResult result = run_training(cfg, data.split, data.num_classes, hooks);
    manifest.end_time = utc_now();
    write_text(dir / "manifest.json", manifest.to_json());
    const Checkpoint& chosen = result.best();
    out << "trained " << to_string(cfg.mode) << " for " << result.steps << " steps; best val Dice "
        << chosen.val_dice << " at step " << chosen.step << " -> " << (dir / "best.ckpt").string() << '\n';
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data_root;
    std::string domains;
    std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    if (!ckpt.has_parameters()) throw ValueError("checkpoint has no parameters: " + a.checkpoint);
    TrainConfig cfg = config_of(ckpt);
    if (!a.data_root.empty()) cfg.data_root = a.data_root;
    if (!a.domains.empty()) cfg.targets = split_list(a.domains);
    if (!cfg.data_root.empty() && !fs::is_directory(cfg.data_root)) {
        throw IoError("data root not found: " + cfg.data_root);
    }
    for (const auto& d : cfg.targets) {
        if (!cfg.data_root.empty() && !fs::is_directory(fs::path(cfg.data_root) / d)) {
            throw IoError("domain directory not found: " + (fs::path(cfg.data_root) / d).string());
        }
    }
    std::vector<std::string> names;
    const auto targets = prepare_targets(cfg, &names);
    const eval::ResultsTable table = eval::evaluate_cross_domain(ckpt, targets, names, cfg.empty_dice);
    const fs::path tsv = a.out.empty() ? fs::path(a.checkpoint).parent_path() / "results.tsv" : fs::path(a.out);
    if (tsv.has_parent_path()) fs::create_directories(tsv.parent_path());
    table.write_tsv(tsv);
    out << table.to_text() << "wrote " << tsv.string() << '\n';
    return kExitOk;
}

struct PreviewArgs {
    std::string checkpoint;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string input_dir;
    int draws = 4;
    int rows = 4;
    int synth = 1;
    bool alpha_zero = false;
    std::string out = "preview.png";
};

int cmd_preview(const PreviewArgs& a, std::ostream& out) {
    if (a.checkpoint.empty() && !a.seed_given) {
        throw ConfigError("--checkpoint", "preview needs --checkpoint or --seed");
    }
    if (a.draws < 0 || a.rows < 1) throw ConfigError("--draws", "--draws must be >= 0 and --rows >= 1");
    TrainConfig cfg;
    synth::Synthesizer<Real> synthesizer;
    std::uint64_t seed = a.seed;
    if (!a.checkpoint.empty()) {
        const Checkpoint ckpt = load_checkpoint(a.checkpoint);
        Trainer trainer = Trainer::from_checkpoint(ckpt);
        cfg = trainer.config();
        if (!a.seed_given) seed = cfg.seed;
        synthesizer = a.synth == 2 ? trainer.synth2() : trainer.synth1();
    } else {
        cfg.seed = seed;
        synthesizer = synth::Synthesizer<Real>::random_init(cfg.synth, splitmix64(seed ^ fnv1a("preview.init")));
    }

    std::vector<Image> sources;
    if (!a.input_dir.empty()) {
        for (const auto& p : list_images(a.input_dir)) {
            if (static_cast<int>(sources.size()) == a.rows) break;
            Image img = io::read_image(p);
            if (!sources.empty() && (img.h != sources[0].h || img.w != sources[0].w)) {
                img = data::resize_bilinear(img, sources[0].h, sources[0].w);
            }
            sources.push_back(data::normalize_zscore(img));
        }
    } else {
        for (auto& s : toy_domain(cfg, data::TextureFamily::kFlat, a.rows, toy_source_seed(seed))) {
            sources.push_back(std::move(s.image));
        }
    }

    const int th = sources[0].h;
    const int tw = sources[0].w;
    constexpr int gap = 2;
    const int rows = static_cast<int>(sources.size());
    const int cols = 1 + a.draws;
    Image canvas(rows * th + (rows - 1) * gap, cols * tw + (cols - 1) * gap, 0);
    const auto channels = synthesizer.style_channels();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int r = 0; r < rows; ++r) {
        const Image& src = sources[static_cast<std::size_t>(r)];
        const auto [lo_it, hi_it] = std::minmax_element(src.v.begin(), src.v.end());
        const double lo = *lo_it, hi = *hi_it;
        paste(canvas, src, r * (th + gap), 0, lo, hi);
        const Tensor<Real> x = as_tensor(src);
        for (int j = 0; j < a.draws; ++j) {
            const auto key = static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(a.draws) + j;
            Rng style_rng = substream(seed, "preview.style", key);
            Rng alpha_rng = substream(seed, "preview.alpha", key);
            const synth::StyleNoise z = synth::sample_style(style_rng, channels);
            const synth::MixRatio alpha(a.alpha_zero ? 0.0 : unit(alpha_rng));
            const Image tile = as_image(synth::synthesize(x, z, alpha, synthesizer));
            paste(canvas, tile, r * (th + gap), (j + 1) * (tw + gap), lo, hi);
        }
    }
    const fs::path path = a.out;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_gray8(path, canvas, 0.0, 1.0);
    out << "wrote " << rows << "x" << cols << " preview grid to " << path.string() << '\n';
    return kExitOk;
}

struct MakeToyArgs {
    std::string out;
    int n = 200;
    std::uint64_t seed = 0;
    int size = 96;
    bool label_by_kind = true;
};

int cmd_make_toy(const MakeToyArgs& a, std::ostream& out) {
    if (a.n < 1) throw ConfigError("--n", "--n must be positive");
    if (a.size < 8) throw ConfigError("--size", "--size must be at least 8");
    data::ToyOptions options;
    options.size = a.size;
    options.label_by_kind = a.label_by_kind;
    const fs::path root = a.out;
    for (const auto family : data::kAllTextureFamilies) {
        auto samples = data::make_toy_dataset(a.n, family, a.seed, options);
        // Raw toy intensities sit roughly in [-1, 2]; map that window onto the 16-bit range.
        for (auto& s : samples) {
            for (auto& v : s.image.v) v = static_cast<Real>((v + 1.0) / 3.0);
        }
        const std::string name(data::to_string(family));
        fs::create_directories(root / name / "images");
        fs::create_directories(root / name / "masks");
        io::write_domain(root, name, samples);
    }
    io::DatasetManifest manifest;
    manifest.num_classes = data::toy_num_classes(options);
    manifest.label_names = data::toy_label_names(options);
    manifest.modality = data::Modality::kOther;
    io::write_manifest(root, manifest);
    out << "wrote " << a.n << " samples for each of " << data::kAllTextureFamilies.size() << " families to "
        << root.string() << '\n';
    return kExitOk;
}

struct InferArgs {
    std::string checkpoint;
    std::string input_dir;
    std::string out;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Trainer trainer = Trainer::from_checkpoint(ckpt);
    const int resize = trainer.config().resize;
    const auto paths = list_images(a.input_dir);
    std::vector<data::Sample> samples;
    std::vector<std::pair<int, int>> shapes;
    for (const auto& p : paths) {
        Image img = io::read_image(p);
        shapes.emplace_back(img.h, img.w);
        if (resize > 0) img = data::resize_bilinear(img, resize, resize);
        data::Sample s;
        s.image = data::normalize_zscore(img);
        s.mask = Mask(s.image.h, s.image.w);
        samples.push_back(std::move(s));
    }
    // Predict one shape at a time; batches must share extents.
    const fs::path dir = a.out;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Mask m = eval::predict_masks(trainer.segmenter(), {samples[i]}, 1).front();
        if (m.h != shapes[i].first || m.w != shapes[i].second) m = data::resize_nearest(m, shapes[i].first, shapes[i].second);
        io::write_mask(dir / (paths[i].stem().string() + ".png"), m);
    }
    out << "wrote " << samples.size() << " masks to " << dir.string() << '\n';
    return kExitOk;
}

struct HeatmapArgs {
    std::string checkpoint;
    std::string input;
    int qy = -1, qx = -1;
    std::string out = "heatmap.png";
};

int cmd_mi_heatmap(const HeatmapArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    Trainer trainer = Trainer::from_checkpoint(ckpt);
    const TrainConfig& cfg = trainer.config();
    Image src;
    if (!a.input.empty()) {
        src = data::normalize_zscore(io::read_image(a.input));
        if (cfg.resize > 0) src = data::resize_bilinear(src, cfg.resize, cfg.resize);
    } else {
        src = toy_domain(cfg, data::TextureFamily::kFlat, 1, toy_source_seed(cfg.seed)).front().image;
    }
    const Tensor<Real> x = as_tensor(src);
    Rng style_rng = substream(cfg.seed, "heatmap.style");
    const auto z = synth::sample_style(style_rng, trainer.synth1().style_channels());
    const Tensor<Real> xh = synth::synthesize(x, z, synth::MixRatio(0.5), trainer.synth1());
    const auto [fh, fw] = trainer.encoder().feature_extent(src.h, src.w);
    const int qy = a.qy >= 0 ? a.qy : fh / 2;
    const int qx = a.qx >= 0 ? a.qx : fw / 2;
    if (qy >= fh || qx >= fw) {
        throw ConfigError("--query", "query cell outside the " + std::to_string(fh) + "x" + std::to_string(fw) +
                                         " feature map");
    }
    // Left: similarity of the synthesized patch against every source cell; right: source against source.
    const Grid<Real> cross = trainer.encoder().similarity_map(xh, {qy, qx}, x);
    const Grid<Real> self = trainer.encoder().similarity_map(x, {qy, qx}, x);
    Image canvas(fh, 2 * fw + 1, -1);
    for (int y = 0; y < fh; ++y) {
        for (int xx = 0; xx < fw; ++xx) {
            canvas.at(y, xx) = cross.at(y, xx);
            canvas.at(y, fw + 1 + xx) = self.at(y, xx);
        }
    }
    const fs::path path = a.out;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_gray8(path, canvas, -1.0, 1.0);
    out << "query (" << qy << ", " << qx << ") on a " << fh << "x" << fw << " feature map: positive similarity "
        << cross.at(qy, qx) << " -> " << path.string() << '\n';
    return kExitOk;
}

struct AblateArgs {
    std::string config;
    std::string modes = "FULL,NO_ADVERSARIAL,NO_MI,ERM";
    std::string seeds = "0,1,2";
    std::string out;
};

int cmd_ablate(const AblateArgs& a, const std::vector<std::string>& extras, std::ostream& out) {
    Config overrides = parse_overrides(extras);
    if (!a.out.empty()) overrides.set("output.dir", a.out);
    const TrainConfig cfg = resolve_config(a.config, overrides);
    eval::AblationOptions options;
    for (const auto& m : split_list(a.modes)) options.modes.push_back(parse_mode(m));
    options.seeds.clear();
    for (const auto& s : split_list(a.seeds)) {
        try {
            options.seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
            throw ConfigError("--seeds", "malformed seed '" + s + "'");
        }
    }
    if (options.modes.empty() || options.seeds.empty()) throw ConfigError("--modes", "need at least one mode and seed");
    options.on_run = [&](Mode m, std::uint64_t seed, const eval::ResultsTable& t) {
        out << to_string(m) << " seed " << seed << ": mean target Dice " << t.average(std::string(to_string(m)))
            << '\n';
        out.flush();
    };

    RunManifest manifest;
    manifest.command = "ablate";
    manifest.config = to_config(cfg);
    manifest.seed = cfg.seed;
    manifest.version = version_stamp();
    manifest.start_time = utc_now();
    manifest.output_dir = cfg.output_dir;
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.txt", manifest.config.serialize());

    const ExperimentData data = prepare_experiment(cfg);
    const eval::ResultsTable table =
        eval::run_ablation(cfg, data.split, data.num_classes, data.targets, options, data.class_names);
    table.write_tsv(dir / "results.tsv");
    write_text(dir / "results.txt", table.to_text());
    manifest.end_time = utc_now();
    write_text(dir / "manifest.json", manifest.to_json());
    out << table.to_text();
    return kExitOk;
}

}  // namespace

std::string version_stamp() { return std::string(ADVSDG_VERSION) + "+" + ADVSDG_GIT_STAMP; }

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["seed"] = seed;
    j["version"] = version;
    j["start_time"] = start_time;
    j["end_time"] = end_time;
    j["output_dir"] = output_dir;
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << config.hash();
    j["config_hash"] = hash.str();
    json c = json::object();
    for (const auto& [k, v] : config.values()) c[k] = v;
    j["config"] = c;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    RunManifest m;
    try {
        const json j = json::parse(text);
        m.command = j.at("command").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.version = j.at("version").get<std::string>();
        m.start_time = j.at("start_time").get<std::string>();
        m.end_time = j.at("end_time").get<std::string>();
        m.output_dir = j.at("output_dir").get<std::string>();
        for (const auto& [k, v] : j.at("config").items()) m.config.set(k, v.get<std::string>());
    } catch (const json::exception& e) {
        throw ValueError(std::string("run manifest: ") + e.what());
    }
    return m;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adversarial single-source domain generalization for segmentation", "advsdg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_stamp());

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a segmenter; extra --key value pairs override config keys");
    train->add_option("-c,--config", train_args.config, "Config file (dotted key = value lines)");
    train->add_option("--mode", train_args.mode, "Alias for trainer.mode");
    train->add_option("--seed", train_args.seed, "Alias for trainer.seed");
    train->add_option("-o,--out", train_args.out, "Alias for output.dir");
    train->allow_extras();

    EvalArgs eval_args;
    auto* evaluate = app.add_subcommand("eval", "Score a checkpoint on target domains and write a results table");
    evaluate->add_option("checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
    evaluate->add_option("--data-root", eval_args.data_root, "Dataset root (default: the checkpoint's data.root)");
    evaluate->add_option("--domains", eval_args.domains, "Comma-separated target domains");
    evaluate->add_option("-o,--out", eval_args.out, "Results TSV (default: results.tsv next to the checkpoint)");

    PreviewArgs preview_args;
    auto* preview = app.add_subcommand("preview", "Render source images next to synthesized variants");
    preview->add_option("--checkpoint", preview_args.checkpoint, "Use the trained synthesizer of a checkpoint");
    auto* seed_opt = preview->add_option("--seed", preview_args.seed, "Seed of the draws; without --checkpoint also of a random synthesizer");
    preview->add_option("--input-dir", preview_args.input_dir, "Directory of source images (default: toy images)");
    preview->add_option("--draws", preview_args.draws, "Synthesized columns per row")->capture_default_str();
    preview->add_option("--rows", preview_args.rows, "Source rows")->capture_default_str();
    preview->add_option("--synth", preview_args.synth, "Synthesizer 1 or 2")->check(CLI::IsMember({1, 2}));
    preview->add_flag("--alpha-zero", preview_args.alpha_zero, "Force the mix ratio to 0");
    preview->add_option("-o,--out", preview_args.out, "Output PNG")->capture_default_str();

    MakeToyArgs toy_args;
    auto* make_toy = app.add_subcommand("make-toy", "Write the toy dataset for every texture family");
    make_toy->add_option("-o,--out", toy_args.out, "Output root")->required();
    make_toy->add_option("-n,--n", toy_args.n, "Samples per family")->capture_default_str();
    make_toy->add_option("--seed", toy_args.seed, "Geometry seed")->capture_default_str();
    make_toy->add_option("--size", toy_args.size, "Image side")->capture_default_str();
    make_toy->add_option("--label-by-kind", toy_args.label_by_kind, "One label per shape kind")->capture_default_str();

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Predict masks for a directory of images");
    infer->add_option("checkpoint", infer_args.checkpoint, "Checkpoint file")->required();
    infer->add_option("--input-dir", infer_args.input_dir, "Images to segment")->required();
    infer->add_option("-o,--out", infer_args.out, "Mask output directory")->required();

    HeatmapArgs heat_args;
    std::vector<int> query;
    auto* heatmap = app.add_subcommand("mi-heatmap", "Dump patch-embedding similarity maps");
    heatmap->add_option("checkpoint", heat_args.checkpoint, "Checkpoint file")->required();
    heatmap->add_option("--input", heat_args.input, "Source image (default: a toy image)");
    heatmap->add_option("--query", query, "Feature cell y x")->expected(2);
    heatmap->add_option("-o,--out", heat_args.out, "Output PNG")->capture_default_str();

    AblateArgs ablate_args;
    auto* ablate = app.add_subcommand("ablate", "Train and score several modes over several seeds");
    ablate->add_option("-c,--config", ablate_args.config, "Config file");
    ablate->add_option("--modes", ablate_args.modes, "Comma-separated modes")->capture_default_str();
    ablate->add_option("--seeds", ablate_args.seeds, "Comma-separated seeds")->capture_default_str();
    ablate->add_option("-o,--out", ablate_args.out, "Alias for output.dir");
    ablate->allow_extras();

    std::string show_path;
    auto* show = app.add_subcommand("config", "Print the resolved config (every key with its value)");
    show->add_option("-c,--config", show_path, "Config file");
    show->allow_extras();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train(train_args, train->remaining(), out);
        if (evaluate->parsed()) return cmd_eval(eval_args, out);
        if (preview->parsed()) {
            preview_args.seed_given = seed_opt->count() > 0;
            return cmd_preview(preview_args, out);
        }
        if (make_toy->parsed()) return cmd_make_toy(toy_args, out);
        if (infer->parsed()) return cmd_infer(infer_args, out);
        if (heatmap->parsed()) {
            if (query.size() == 2) {
                heat_args.qy = query[0];
                heat_args.qx = query[1];
            }
            return cmd_mi_heatmap(heat_args, out);
        }
        if (ablate->parsed()) return cmd_ablate(ablate_args, ablate->remaining(), out);
        if (show->parsed()) {
            out << to_config(resolve_config(show_path, parse_overrides(show->remaining()))).serialize();
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "advsdg: config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "advsdg: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace advsdg::cli
