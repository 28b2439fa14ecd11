// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// Preprocessing, augmentation, the synthetic toy dataset and source splits.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advsdg/random.hpp"
#include "advsdg/tensor.hpp"

namespace advsdg::data {

enum class Modality { kCT, kMRI, kOther };

[[nodiscard]] std::string_view to_string(Modality m) noexcept;
[[nodiscard]] Modality parse_modality(std::string_view s);

/// Grayscale volume stored [depth, height, width].
struct Volume {
    int depth = 0;
    int h = 0;
    int w = 0;
    std::vector<Real> voxels;
    std::optional<std::array<double, 3>> spacing;
    Modality modality = Modality::kOther;

    Volume() = default;
    Volume(int d, int height, int width, Modality mod = Modality::kOther, Real fill = 0)
        : depth(d), h(height), w(width), voxels(static_cast<std::size_t>(d) * height * width, fill),
          modality(mod) {}

    Real& at(int z, int y, int x) noexcept {
        return voxels[(static_cast<std::size_t>(z) * h + y) * w + x];
    }
    Real at(int z, int y, int x) const noexcept {
        return voxels[(static_cast<std::size_t>(z) * h + y) * w + x];
    }
    [[nodiscard]] Image slice(int z) const;
};

/// Integer label volume aligned with a Volume.
struct LabelVolume {
    int depth = 0;
    int h = 0;
    int w = 0;
    std::vector<std::int32_t> labels;

    [[nodiscard]] Mask slice(int z) const;
};

struct Sample {
    Image image;
    Mask mask;
    std::string domain_tag;
    /// Samples sharing a non-empty id come from one volume; splits and
    /// volumetric Dice group by it.
    std::string volume_id;
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::uint64_t seed = 0;
};

inline constexpr Real kCtMin = -275;
inline constexpr Real kCtMax = 125;

/// Clamps CT intensities to [-275, 125]. Throws ModalityError for non-CT input.
[[nodiscard]] Volume clip_ct(const Volume& volume);

/// Linear-interpolation percentile (q in [0, 100]) between order statistics.
[[nodiscard]] double percentile(std::span<const Real> values, double q);

/// Caps MRI intensities at their 99.5th percentile. Throws ModalityError for non-MRI input.
[[nodiscard]] Volume clip_mri_percentile(const Volume& volume, double q = 99.5);

/// Bilinear resampling with half-pixel centers and edge clamping.
[[nodiscard]] Image resize_bilinear(const Image& image, int out_h, int out_w);
[[nodiscard]] Mask resize_nearest(const Mask& mask, int out_h, int out_w);

/// Resizes every axial slice to target x target (bilinear).
[[nodiscard]] Volume resize_axial(const Volume& volume, int target = 192);
/// Label counterpart of resize_axial (nearest neighbour).
[[nodiscard]] LabelVolume resize_axial(const LabelVolume& labels, int target = 192);

/// Zero mean, unit population variance. A constant image maps to zeros.
[[nodiscard]] Image normalize_zscore(const Image& image);

/// Splits a volume and its labels into per-slice samples sharing `volume_id`.
[[nodiscard]] std::vector<Sample> slice_volume(const Volume& volume, const LabelVolume& labels,
                                               const std::string& domain_tag,
                                               const std::string& volume_id);

struct AugmentOptions {
    double p_gamma = 0.5;
    double gamma_min = 0.5;
    double gamma_max = 2.0;
    double p_noise = 0.5;
    double noise_std = 0.05;
    double p_affine = 0.5;
    double rotate_deg = 15.0;
    double scale = 0.1;
    double translate = 0.05;  // fraction of the extent
    double p_elastic = 0.3;
    double elastic_sigma = 6.0;
    double elastic_magnitude = 3.0;  // peak displacement in pixels
};

/// Gamma contrast, Gaussian noise, affine and elastic warps (shared by image
/// and mask), then z-scoring. Each stage fires with its own probability.
[[nodiscard]] Sample augment(const Sample& sample, const AugmentOptions& options, Rng& rng);

/// Square window of side `size` at a uniform position; throws ValueError if it does not fit.
[[nodiscard]] Sample random_crop(const Sample& sample, int size, Rng& rng);

/// Separable Gaussian blur with edge clamping; exposed for the elastic field.
[[nodiscard]] Image gaussian_blur(const Image& image, double sigma);

enum class TextureFamily { kFlat, kStriped, kNoisy, kGradient, kInverted };

inline constexpr std::array<TextureFamily, 5> kAllTextureFamilies = {
    TextureFamily::kFlat, TextureFamily::kStriped, TextureFamily::kNoisy, TextureFamily::kGradient,
    TextureFamily::kInverted};

[[nodiscard]] std::string_view to_string(TextureFamily f) noexcept;
[[nodiscard]] TextureFamily parse_texture_family(std::string_view s);

struct ToyOptions {
    int size = 96;
    /// Label shapes by kind (disk=1, ellipse=2, rounded rectangle=3); otherwise all foreground is 1.
    bool label_by_kind = true;
};

[[nodiscard]] int toy_num_classes(const ToyOptions& options) noexcept;
[[nodiscard]] std::vector<std::string> toy_label_names(const ToyOptions& options);

/// Images with 1-3 non-overlapping shapes. Geometry depends only on (seed, index),
/// so every texture family shares the same masks for a given seed.
[[nodiscard]] std::vector<Sample> make_toy_dataset(int n_samples, TextureFamily family,
                                                   std::uint64_t seed, const ToyOptions& options = {});

/// Seeded shuffle then ratio split, by volume when volume ids are present.
[[nodiscard]] DatasetSplit split_source(const std::vector<Sample>& samples, double ratio,
                                        std::uint64_t seed);

}  // namespace advsdg::data
