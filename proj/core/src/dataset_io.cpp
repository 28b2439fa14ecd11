// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/dataset_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace advsdg::io {

namespace {

cv::Mat read_raster(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("no such file: " + path.string());
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot decode raster: " + path.string());
    if (m.channels() != 1) throw IoError("expected a single-channel raster: " + path.string());
    return m;
}

void write_raster(const fs::path& path, const cv::Mat& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Fixed compression level keeps bytes stable across runs.
    const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imwrite(path.string(), m, params)) throw IoError("cannot write raster: " + path.string());
}

bool is_raster(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

std::map<std::string, fs::path> list_rasters(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_raster(entry.path())) out[entry.path().stem().string()] = entry.path();
    }
    return out;
}

}  // namespace

Image read_image(const fs::path& path) {
    const cv::Mat m = read_raster(path);
    Image out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            switch (m.depth()) {
                case CV_8U: out.at(y, x) = m.at<std::uint8_t>(y, x); break;
                case CV_16U: out.at(y, x) = m.at<std::uint16_t>(y, x); break;
                case CV_16S: out.at(y, x) = m.at<std::int16_t>(y, x); break;
                case CV_32F: out.at(y, x) = m.at<float>(y, x); break;
                default: throw IoError("unsupported raster depth in " + path.string());
            }
        }
    }
    return out;
}

Mask read_mask(const fs::path& path) {
    const cv::Mat m = read_raster(path);
    Mask out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            switch (m.depth()) {
                case CV_8U: out.at(y, x) = m.at<std::uint8_t>(y, x); break;
                case CV_16U: out.at(y, x) = m.at<std::uint16_t>(y, x); break;
                default: throw IoError("mask rasters must be 8- or 16-bit unsigned: " + path.string());
            }
        }
    }
    return out;
}

void write_image_u16(const fs::path& path, const Image& image, double lo, double hi) {
    if (!(hi > lo)) throw ValueError("write_image_u16: empty display range");
    cv::Mat m(image.h, image.w, CV_16UC1);
    for (int y = 0; y < image.h; ++y) {
        for (int x = 0; x < image.w; ++x) {
            const double t = std::clamp((image.at(y, x) - lo) / (hi - lo), 0.0, 1.0);
            m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        }
    }
    write_raster(path, m);
}

void write_mask(const fs::path& path, const Mask& mask) {
    cv::Mat m(mask.h, mask.w, CV_8UC1);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            const int v = mask.at(y, x);
            if (v < 0 || v > 255) throw ValueError("write_mask: label " + std::to_string(v) + " does not fit 8 bits");
            m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(v);
        }
    }
    write_raster(path, m);
}

void write_gray8(const fs::path& path, const Image& image, double lo, double hi) {
    cv::Mat m(image.h, image.w, CV_8UC1);
    const double range = hi - lo;
    for (int y = 0; y < image.h; ++y) {
        for (int x = 0; x < image.w; ++x) {
            const double t = range > 0 ? std::clamp((image.at(y, x) - lo) / range, 0.0, 1.0) : 0.0;
            m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(t * 255.0));
        }
    }
    write_raster(path, m);
}

void write_gray8(const fs::path& path, const Image& image) {
    if (image.v.empty()) throw ValueError("write_gray8: empty image");
    const auto [mn, mx] = std::minmax_element(image.v.begin(), image.v.end());
    write_gray8(path, image, *mn, *mx);
}

// ---------------------------------------------------------------------------
// Manifest

data::Modality DatasetManifest::modality_of(const std::string& domain) const {
    auto it = domain_modality.find(domain);
    return it != domain_modality.end() ? it->second : modality;
}

DatasetManifest read_manifest(const fs::path& root) {
    const fs::path path = root / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.num_classes = j.at("num_classes").get<int>();
        if (j.contains("label_names")) m.label_names = j["label_names"].get<std::vector<std::string>>();
        if (j.contains("modality")) m.modality = data::parse_modality(j["modality"].get<std::string>());
        if (j.contains("domains")) {
            for (const auto& [name, mod] : j["domains"].items()) {
                m.domain_modality[name] = data::parse_modality(mod.get<std::string>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid manifest " + path.string() + ": " + e.what());
    }
    if (m.num_classes < 2) throw ValueError("manifest num_classes must be at least 2");
    if (!m.label_names.empty() && static_cast<int>(m.label_names.size()) != m.num_classes) {
        throw ValueError("manifest label_names has " + std::to_string(m.label_names.size()) + " entries for " +
                         std::to_string(m.num_classes) + " classes");
    }
    return m;
}

void write_manifest(const fs::path& root, const DatasetManifest& manifest) {
    nlohmann::ordered_json j;
    j["num_classes"] = manifest.num_classes;
    j["label_names"] = manifest.label_names;
    j["modality"] = std::string(data::to_string(manifest.modality));
    nlohmann::ordered_json domains = nlohmann::ordered_json::object();
    for (const auto& [name, mod] : manifest.domain_modality) domains[name] = std::string(data::to_string(mod));
    j["domains"] = domains;
    fs::create_directories(root);
    std::ofstream out(root / "manifest.json");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write manifest under " + root.string());
}

// ---------------------------------------------------------------------------
// Domains

std::string volume_id_of(const std::string& stem) {
    const auto pos = stem.find("__");
    return pos == std::string::npos ? stem : stem.substr(0, pos);
}

std::vector<data::Sample> load_domain(const fs::path& root, const std::string& domain,
                                      const DatasetManifest& manifest, const LoadOptions& options) {
    const fs::path images_dir = root / domain / "images";
    const fs::path masks_dir = root / domain / "masks";
    if (!fs::is_directory(images_dir)) throw IoError("missing domain directory " + images_dir.string());
    if (!fs::is_directory(masks_dir)) throw IoError("missing domain directory " + masks_dir.string());
    const auto images = list_rasters(images_dir);
    const auto masks = list_rasters(masks_dir);
    if (images.empty()) throw IoError("no images in " + images_dir.string());

    const data::Modality modality = manifest.modality_of(domain);
    // Stems are visited in sorted order, so slices of one volume stay in order.
    std::vector<data::Sample> raw;
    for (const auto& [stem, path] : images) {
        auto it = masks.find(stem);
        if (it == masks.end()) throw IoError("no mask for " + path.string());
        data::Sample s{read_image(path), read_mask(it->second), domain, volume_id_of(stem)};
        if (s.image.h != s.mask.h || s.image.w != s.mask.w) {
            throw ShapeError("image and mask differ in shape for " + stem);
        }
        for (auto v : s.mask.v) {
            if (v >= manifest.num_classes) {
                throw ValueError("label " + std::to_string(v) + " in " + it->second.string() + " exceeds K-1 = " +
                                 std::to_string(manifest.num_classes - 1));
            }
        }
        raw.push_back(std::move(s));
    }

    std::vector<data::Sample> out;
    out.reserve(raw.size());
    std::size_t begin = 0;
    while (begin < raw.size()) {
        std::size_t end = begin + 1;
        while (end < raw.size() && raw[end].volume_id == raw[begin].volume_id) ++end;
        const int h = raw[begin].image.h;
        const int w = raw[begin].image.w;
        data::Volume vol(static_cast<int>(end - begin), h, w, modality);
        for (std::size_t i = begin; i < end; ++i) {
            if (raw[i].image.h != h || raw[i].image.w != w) {
                throw ShapeError("slices of volume '" + raw[begin].volume_id + "' differ in shape");
            }
            std::copy(raw[i].image.v.begin(), raw[i].image.v.end(),
                      vol.voxels.begin() + static_cast<std::ptrdiff_t>(i - begin) * h * w);
        }
        if (options.clip && modality == data::Modality::kCT) vol = data::clip_ct(vol);
        if (options.clip && modality == data::Modality::kMRI) vol = data::clip_mri_percentile(vol);
        for (std::size_t i = begin; i < end; ++i) {
            data::Sample s = std::move(raw[i]);
            s.image = vol.slice(static_cast<int>(i - begin));
            if (options.resize > 0 && (s.image.h != options.resize || s.image.w != options.resize)) {
                s.image = data::resize_bilinear(s.image, options.resize, options.resize);
                s.mask = data::resize_nearest(s.mask, options.resize, options.resize);
            }
            if (options.zscore) s.image = data::normalize_zscore(s.image);
            out.push_back(std::move(s));
        }
        begin = end;
    }
    return out;
}

void write_domain(const fs::path& root, const std::string& domain, const std::vector<data::Sample>& samples) {
    const int digits = std::max<int>(4, static_cast<int>(std::to_string(samples.size()).size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::string index = std::to_string(i);
        index.insert(0, static_cast<std::size_t>(digits) - std::min<std::size_t>(digits, index.size()), '0');
        const std::string stem = samples[i].volume_id.empty() ? index : samples[i].volume_id + "__" + index;
        write_image_u16(root / domain / "images" / (stem + ".png"), samples[i].image);
        write_mask(root / domain / "masks" / (stem + ".png"), samples[i].mask);
    }
}

// ---------------------------------------------------------------------------
// NIfTI-1

namespace {

struct NiftiData {
    std::array<int, 3> dim{};
    std::array<double, 3> pixdim{};
    std::vector<double> values;
};

template <typename T>
T swap_bytes(T v) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

template <typename T>
T field(const unsigned char* hdr, std::size_t offset, bool swap) {
    T v;
    std::memcpy(&v, hdr + offset, sizeof(T));
    return swap ? swap_bytes(v) : v;
}

NiftiData read_nifti_raw(const fs::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes;
    std::array<unsigned char, 1 << 16> buf{};
    int got = 0;
    while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) {
        bytes.insert(bytes.end(), buf.begin(), buf.begin() + got);
    }
    const bool failed = got < 0;
    gzclose(f);
    if (failed || bytes.size() < 348) throw IoError("truncated or unreadable NIfTI file " + path.string());

    const unsigned char* hdr = bytes.data();
    bool swap = false;
    if (field<std::int32_t>(hdr, 0, false) != 348) {
        if (field<std::int32_t>(hdr, 0, true) != 348) throw IoError("not a NIfTI-1 file: " + path.string());
        swap = true;
    }
    NiftiData out;
    const int ndim = field<std::int16_t>(hdr, 40, swap);
    if (ndim < 2 || ndim > 4) throw IoError("unsupported NIfTI rank in " + path.string());
    for (int a = 0; a < 3; ++a) {
        out.dim[a] = a < ndim ? field<std::int16_t>(hdr, 42 + 2 * a, swap) : 1;
        out.pixdim[a] = a < ndim ? field<float>(hdr, 80 + 4 * a, swap) : 1.0;
    }
    if (ndim == 4 && field<std::int16_t>(hdr, 48, swap) > 1) {
        throw IoError("4D NIfTI volumes are not supported: " + path.string());
    }
    const int datatype = field<std::int16_t>(hdr, 70, swap);
    const auto offset = static_cast<std::size_t>(field<float>(hdr, 108, swap));
    double slope = field<float>(hdr, 112, swap);
    const double inter = field<float>(hdr, 116, swap);
    if (slope == 0.0 || !std::isfinite(slope)) slope = 1.0;

    const std::size_t count = static_cast<std::size_t>(out.dim[0]) * out.dim[1] * out.dim[2];
    auto decode = [&]<typename T>(T) {
        if (offset + count * sizeof(T) > bytes.size()) throw IoError("NIfTI payload truncated: " + path.string());
        out.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            const double raw = static_cast<double>(field<T>(bytes.data(), offset + i * sizeof(T), swap));
            out.values[i] = raw * slope + (std::isfinite(inter) ? inter : 0.0);
        }
    };
    switch (datatype) {
        case 2: decode(std::uint8_t{}); break;
        case 4: decode(std::int16_t{}); break;
        case 8: decode(std::int32_t{}); break;
        case 16: decode(float{}); break;
        case 64: decode(double{}); break;
        case 256: decode(std::int8_t{}); break;
        case 512: decode(std::uint16_t{}); break;
        case 768: decode(std::uint32_t{}); break;
        default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + " in " + path.string());
    }
    return out;
}

}  // namespace

data::Volume read_nifti(const fs::path& path, data::Modality modality) {
    NiftiData raw = read_nifti_raw(path);
    data::Volume vol(raw.dim[2], raw.dim[1], raw.dim[0], modality);
    for (std::size_t i = 0; i < raw.values.size(); ++i) vol.voxels[i] = static_cast<Real>(raw.values[i]);
    vol.spacing = std::array<double, 3>{raw.pixdim[2], raw.pixdim[1], raw.pixdim[0]};
    return vol;
}

data::LabelVolume read_nifti_labels(const fs::path& path) {
    NiftiData raw = read_nifti_raw(path);
    data::LabelVolume out{raw.dim[2], raw.dim[1], raw.dim[0], {}};
    out.labels.resize(raw.values.size());
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        out.labels[i] = static_cast<std::int32_t>(std::lround(raw.values[i]));
    }
    return out;
}

}  // namespace advsdg::io
