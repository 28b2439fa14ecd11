// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// On-disk datasets: per-slice rasters, the dataset manifest and NIfTI volumes.
//
// Layout:
//   <root>/manifest.json
//   <root>/<domain>/images/<stem>.png|.tif
//   <root>/<domain>/masks/<stem>.png|.tif
//
// A stem of the form "<volume>__<slice>" groups slices into volumes.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "advsdg/data.hpp"

namespace advsdg::io {

namespace fs = std::filesystem;

/// Reads an 8- or 16-bit single-channel raster; values are the raw integer levels.
[[nodiscard]] Image read_image(const fs::path& path);
/// Reads an integer-coded label raster.
[[nodiscard]] Mask read_mask(const fs::path& path);

/// 16-bit PNG of round((v - lo) / (hi - lo) * 65535), clamped.
void write_image_u16(const fs::path& path, const Image& image, double lo = 0.0, double hi = 1.0);
/// 8-bit PNG, labels must lie in [0, 255].
void write_mask(const fs::path& path, const Mask& mask);
/// 8-bit PNG after min-max scaling; a constant image maps to 0.
void write_gray8(const fs::path& path, const Image& image);
/// 8-bit PNG with explicit display range.
void write_gray8(const fs::path& path, const Image& image, double lo, double hi);

struct DatasetManifest {
    int num_classes = 2;
    std::vector<std::string> label_names;
    data::Modality modality = data::Modality::kOther;
    /// Per-domain modality overrides, e.g. CT source with an MRI target.
    std::map<std::string, data::Modality> domain_modality;

    [[nodiscard]] data::Modality modality_of(const std::string& domain) const;
};

[[nodiscard]] DatasetManifest read_manifest(const fs::path& root);
void write_manifest(const fs::path& root, const DatasetManifest& manifest);

struct LoadOptions {
    /// Resize slices to this extent when > 0.
    int resize = 0;
    /// Apply the modality clip (CT window, MRI percentile cap) per volume.
    bool clip = true;
    /// Z-score every slice.
    bool zscore = true;
};

/// Loads one domain, preprocessed per the manifest modality. Throws IoError when
/// the directory or a matching mask is missing, ValueError for labels >= K.
[[nodiscard]] std::vector<data::Sample> load_domain(const fs::path& root, const std::string& domain,
                                                    const DatasetManifest& manifest,
                                                    const LoadOptions& options = {});

/// Writes samples as "<stem>.png" pairs. Stems default to a zero-padded index,
/// prefixed by "<volume_id>__" when the sample carries one.
void write_domain(const fs::path& root, const std::string& domain, const std::vector<data::Sample>& samples);

/// "<volume>__<slice>" -> "<volume>"; stems without the separator return themselves.
[[nodiscard]] std::string volume_id_of(const std::string& stem);

/// NIfTI-1 reader (.nii or .nii.gz). Axis order maps (i, j, k) to (x, y, z).
[[nodiscard]] data::Volume read_nifti(const fs::path& path, data::Modality modality = data::Modality::kOther);
[[nodiscard]] data::LabelVolume read_nifti_labels(const fs::path& path);

}  // namespace advsdg::io
