// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/experiment.hpp"

#include <algorithm>

#include "advsdg/dataset_io.hpp"
#include "advsdg/random.hpp"

namespace advsdg {

std::uint64_t toy_source_seed(std::uint64_t seed) noexcept {
    return splitmix64(seed ^ fnv1a("toy.source"));
}

std::uint64_t toy_target_seed(std::uint64_t seed) noexcept {
    return splitmix64(seed ^ fnv1a("toy.target"));
}

std::vector<data::Sample> toy_domain(const TrainConfig& config, data::TextureFamily family, int n_samples,
                                     std::uint64_t seed) {
    auto samples = data::make_toy_dataset(n_samples, family, seed, config.toy);
    for (auto& s : samples) {
        if (config.resize > 0 && (s.image.h != config.resize || s.image.w != config.resize)) {
            s.image = data::resize_bilinear(s.image, config.resize, config.resize);
            s.mask = data::resize_nearest(s.mask, config.resize, config.resize);
        }
        s.image = data::normalize_zscore(s.image);
    }
    return samples;
}

std::vector<eval::Domain> prepare_targets(const TrainConfig& config, std::vector<std::string>* class_names) {
    std::vector<eval::Domain> out;
    if (config.data_root.empty()) {
        const int k = data::toy_num_classes(config.toy);
        const int n = std::max(1, config.toy_samples / 2);
        for (const auto& name : config.targets) {
            out.push_back({name, toy_domain(config, data::parse_texture_family(name), n, toy_target_seed(config.seed)), k});
        }
        if (class_names) *class_names = data::toy_label_names(config.toy);
        return out;
    }
    const auto manifest = io::read_manifest(config.data_root);
    io::LoadOptions load;
    load.resize = config.resize;
    for (const auto& name : config.targets) {
        out.push_back({name, io::load_domain(config.data_root, name, manifest, load), manifest.num_classes});
    }
    if (class_names) *class_names = manifest.label_names;
    return out;
}

ExperimentData prepare_experiment(const TrainConfig& config, bool load_targets) {
    ExperimentData out;
    std::vector<data::Sample> source;
    if (config.data_root.empty()) {
        source = toy_domain(config, data::parse_texture_family(config.source), config.toy_samples,
                            toy_source_seed(config.seed));
        out.num_classes = data::toy_num_classes(config.toy);
        out.class_names = data::toy_label_names(config.toy);
    } else {
        const auto manifest = io::read_manifest(config.data_root);
        io::LoadOptions load;
        load.resize = config.resize;
        source = io::load_domain(config.data_root, config.source, manifest, load);
        out.num_classes = manifest.num_classes;
        out.class_names = manifest.label_names;
    }
    out.split = data::split_source(source, config.split_ratio, config.seed);
    if (load_targets) out.targets = prepare_targets(config);
    return out;
}

}  // namespace advsdg
