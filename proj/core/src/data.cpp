// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace advsdg::data {

std::string_view to_string(Modality m) noexcept {
    switch (m) {
        case Modality::kCT: return "CT";
        case Modality::kMRI: return "MRI";
        case Modality::kOther: return "OTHER";
    }
    return "OTHER";
}

Modality parse_modality(std::string_view s) {
    if (s == "CT") return Modality::kCT;
    if (s == "MRI") return Modality::kMRI;
    if (s == "OTHER") return Modality::kOther;
    throw ValueError("unknown modality '" + std::string(s) + "'");
}

Image Volume::slice(int z) const {
    Image out(h, w);
    std::copy_n(voxels.begin() + static_cast<std::ptrdiff_t>(z) * h * w, out.size(), out.v.begin());
    return out;
}

Mask LabelVolume::slice(int z) const {
    Mask out(h, w);
    std::copy_n(labels.begin() + static_cast<std::ptrdiff_t>(z) * h * w, out.size(), out.v.begin());
    return out;
}

// ---------------------------------------------------------------------------
// Intensity preprocessing

Volume clip_ct(const Volume& volume) {
    if (volume.modality != Modality::kCT) {
        throw ModalityError("clip_ct applies to CT volumes, got " + std::string(to_string(volume.modality)));
    }
    Volume out = volume;
    for (Real& v : out.voxels) v = std::clamp(v, kCtMin, kCtMax);
    return out;
}

double percentile(std::span<const Real> values, double q) {
    if (values.empty()) throw ValueError("percentile of an empty set");
    if (!(q >= 0.0 && q <= 100.0)) throw ValueError("percentile rank must lie in [0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Volume clip_mri_percentile(const Volume& volume, double q) {
    if (volume.modality != Modality::kMRI) {
        throw ModalityError("clip_mri_percentile applies to MRI volumes, got " +
                            std::string(to_string(volume.modality)));
    }
    const auto cap = static_cast<Real>(percentile(volume.voxels, q));
    Volume out = volume;
    for (Real& v : out.voxels) v = std::min(v, cap);
    return out;
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
    Image out(out_h, out_w);
    const double sy = static_cast<double>(image.h) / out_h;
    const double sx = static_cast<double>(image.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.w - 1);
            const double wx = fx - x0;
            const double top = image.at(y0, x0) * (1 - wx) + image.at(y0, x1) * wx;
            const double bot = image.at(y1, x0) * (1 - wx) + image.at(y1, x1) * wx;
            out.at(y, x) = static_cast<Real>(top * (1 - wy) + bot * wy);
        }
    }
    return out;
}

Mask resize_nearest(const Mask& mask, int out_h, int out_w) {
    Mask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(mask.h - 1, static_cast<int>((y + 0.5) * mask.h / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(mask.w - 1, static_cast<int>((x + 0.5) * mask.w / out_w));
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

Volume resize_axial(const Volume& volume, int target) {
    if (target < 8) throw ValueError("resize_axial: target extent must be at least 8");
    Volume out(volume.depth, target, target, volume.modality);
    out.spacing = volume.spacing;
    for (int z = 0; z < volume.depth; ++z) {
        const Image s = resize_bilinear(volume.slice(z), target, target);
        std::copy(s.v.begin(), s.v.end(), out.voxels.begin() + static_cast<std::ptrdiff_t>(z) * target * target);
    }
    return out;
}

LabelVolume resize_axial(const LabelVolume& labels, int target) {
    if (target < 8) throw ValueError("resize_axial: target extent must be at least 8");
    LabelVolume out{labels.depth, target, target, {}};
    out.labels.resize(static_cast<std::size_t>(labels.depth) * target * target);
    for (int z = 0; z < labels.depth; ++z) {
        const Mask s = resize_nearest(labels.slice(z), target, target);
        std::copy(s.v.begin(), s.v.end(), out.labels.begin() + static_cast<std::ptrdiff_t>(z) * target * target);
    }
    return out;
}

Image normalize_zscore(const Image& image) {
    Image out(image.h, image.w);
    if (image.v.empty()) return out;
    double sum = 0.0;
    for (Real v : image.v) sum += v;
    const double mu = sum / static_cast<double>(image.size());
    double sq = 0.0;
    for (Real v : image.v) sq += (v - mu) * (v - mu);
    const double sd = std::sqrt(sq / static_cast<double>(image.size()));
    if (sd < 1e-8) return out;
    for (std::size_t i = 0; i < image.size(); ++i) out.v[i] = static_cast<Real>((image.v[i] - mu) / sd);
    return out;
}

std::vector<Sample> slice_volume(const Volume& volume, const LabelVolume& labels,
                                 const std::string& domain_tag, const std::string& volume_id) {
    if (volume.depth != labels.depth || volume.h != labels.h || volume.w != labels.w) {
        throw ShapeError("slice_volume: label volume does not match image volume");
    }
    std::vector<Sample> out;
    for (int z = 0; z < volume.depth; ++z) {
        out.push_back(Sample{volume.slice(z), labels.slice(z), domain_tag, volume_id});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double ks = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        ks += k[i + radius];
    }
    for (double& v : k) v /= ks;
    Image tmp(image.h, image.w);
    Image out(image.h, image.w);
    for (int y = 0; y < image.h; ++y) {
        for (int x = 0; x < image.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += k[i + radius] * image.at(y, std::clamp(x + i, 0, image.w - 1));
            }
            tmp.at(y, x) = static_cast<Real>(acc);
        }
    }
    for (int y = 0; y < image.h; ++y) {
        for (int x = 0; x < image.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += k[i + radius] * tmp.at(std::clamp(y + i, 0, image.h - 1), x);
            }
            out.at(y, x) = static_cast<Real>(acc);
        }
    }
    return out;
}

namespace {

Real sample_bilinear(const Image& img, double fy, double fx) {
    fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
    const int y0 = static_cast<int>(fy);
    const int x0 = static_cast<int>(fx);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const int x1 = std::min(x0 + 1, img.w - 1);
    const double wy = fy - y0;
    const double wx = fx - x0;
    return static_cast<Real>((img.at(y0, x0) * (1 - wx) + img.at(y0, x1) * wx) * (1 - wy) +
                             (img.at(y1, x0) * (1 - wx) + img.at(y1, x1) * wx) * wy);
}

std::int32_t sample_nearest(const Mask& m, double fy, double fx) {
    const int y = std::clamp(static_cast<int>(std::lround(fy)), 0, m.h - 1);
    const int x = std::clamp(static_cast<int>(std::lround(fx)), 0, m.w - 1);
    return m.at(y, x);
}

// Resamples image and mask at per-pixel source coordinates.
template <typename CoordFn>
void warp(Sample& s, CoordFn&& source_of) {
    Image img(s.image.h, s.image.w);
    Mask msk(s.mask.h, s.mask.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const auto [fy, fx] = source_of(y, x);
            img.at(y, x) = sample_bilinear(s.image, fy, fx);
            msk.at(y, x) = sample_nearest(s.mask, fy, fx);
        }
    }
    s.image = std::move(img);
    s.mask = std::move(msk);
}

}  // namespace

Sample augment(const Sample& sample, const AugmentOptions& options, Rng& rng) {
    if (!sample.image.same_shape(Image(sample.mask.h, sample.mask.w))) {
        throw ShapeError("augment: image and mask differ in shape");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Sample s = sample;
    const int h = s.image.h;
    const int w = s.image.w;

    if (unit(rng) < options.p_gamma) {
        const double gamma = options.gamma_min + unit(rng) * (options.gamma_max - options.gamma_min);
        const auto [mn, mx] = std::minmax_element(s.image.v.begin(), s.image.v.end());
        const double lo = *mn;
        const double range = *mx - lo;
        if (range > 0.0) {
            for (Real& v : s.image.v) {
                v = static_cast<Real>(std::pow((v - lo) / range, gamma) * range + lo);
            }
        }
    }
    if (unit(rng) < options.p_noise) {
        std::normal_distribution<double> noise(0.0, options.noise_std);
        for (Real& v : s.image.v) v = static_cast<Real>(v + noise(rng));
    }
    if (unit(rng) < options.p_affine) {
        const double angle = (2.0 * unit(rng) - 1.0) * options.rotate_deg * std::numbers::pi / 180.0;
        const double scale = 1.0 + (2.0 * unit(rng) - 1.0) * options.scale;
        const double ty = (2.0 * unit(rng) - 1.0) * options.translate * h;
        const double tx = (2.0 * unit(rng) - 1.0) * options.translate * w;
        const double cy = 0.5 * (h - 1);
        const double cx = 0.5 * (w - 1);
        const double c = std::cos(angle) / scale;
        const double sn = std::sin(angle) / scale;
        warp(s, [&](int y, int x) {
            const double dy = y - cy - ty;
            const double dx = x - cx - tx;
            return std::pair{cy + c * dy - sn * dx, cx + sn * dy + c * dx};
        });
    }
    if (unit(rng) < options.p_elastic) {
        std::uniform_real_distribution<double> field(-1.0, 1.0);
        Image fy(h, w), fx(h, w);
        for (Real& v : fy.v) v = static_cast<Real>(field(rng));
        for (Real& v : fx.v) v = static_cast<Real>(field(rng));
        fy = gaussian_blur(fy, options.elastic_sigma);
        fx = gaussian_blur(fx, options.elastic_sigma);
        double peak = 0.0;
        for (std::size_t i = 0; i < fy.size(); ++i) {
            peak = std::max({peak, std::abs(static_cast<double>(fy.v[i])), std::abs(static_cast<double>(fx.v[i]))});
        }
        const double gain = peak > 0.0 ? options.elastic_magnitude / peak : 0.0;
        warp(s, [&](int y, int x) {
            return std::pair{y + gain * fy.at(y, x), x + gain * fx.at(y, x)};
        });
    }
    s.image = normalize_zscore(s.image);
    return s;
}

Sample random_crop(const Sample& sample, int size, Rng& rng) {
    if (size < 1 || size > sample.image.h || size > sample.image.w) {
        throw ValueError("random_crop: window " + std::to_string(size) + " does not fit a " +
                         std::to_string(sample.image.h) + "x" + std::to_string(sample.image.w) + " image");
    }
    const int y0 = std::uniform_int_distribution<int>(0, sample.image.h - size)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, sample.image.w - size)(rng);
    Sample out{Image(size, size), Mask(size, size), sample.domain_tag, sample.volume_id};
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            out.image.at(y, x) = sample.image.at(y0 + y, x0 + x);
            out.mask.at(y, x) = sample.mask.at(y0 + y, x0 + x);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy dataset

std::string_view to_string(TextureFamily f) noexcept {
    switch (f) {
        case TextureFamily::kFlat: return "flat";
        case TextureFamily::kStriped: return "striped";
        case TextureFamily::kNoisy: return "noisy";
        case TextureFamily::kGradient: return "gradient";
        case TextureFamily::kInverted: return "inverted-contrast";
    }
    return "flat";
}

TextureFamily parse_texture_family(std::string_view s) {
    for (TextureFamily f : kAllTextureFamilies) {
        if (to_string(f) == s) return f;
    }
    if (s == "inverted") return TextureFamily::kInverted;
    throw ValueError("unknown texture family '" + std::string(s) + "'");
}

int toy_num_classes(const ToyOptions& options) noexcept { return options.label_by_kind ? 4 : 2; }

std::vector<std::string> toy_label_names(const ToyOptions& options) {
    if (options.label_by_kind) return {"background", "disk", "ellipse", "rounded_rect"};
    return {"background", "shape"};
}

namespace {

enum class ShapeKind { kDisk = 0, kEllipse = 1, kRoundedRect = 2 };

struct Shape {
    ShapeKind kind;
    double cy, cx;
    double a, b;  // half extents along the rotated axes
    double angle;
    double corner;

    [[nodiscard]] double bounding_radius() const { return std::hypot(a, b); }

    [[nodiscard]] bool contains(double y, double x) const {
        const double dy = y - cy;
        const double dx = x - cx;
        const double u = std::cos(angle) * dx + std::sin(angle) * dy;
        const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
        switch (kind) {
            case ShapeKind::kDisk: return u * u + v * v <= a * a;
            case ShapeKind::kEllipse: return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
            case ShapeKind::kRoundedRect: {
                const double qx = std::abs(u) - (a - corner);
                const double qy = std::abs(v) - (b - corner);
                const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
                return outside + std::min(std::max(qx, qy), 0.0) - corner <= 0.0;
            }
        }
        return false;
    }
};

std::vector<Shape> draw_geometry(Rng& rng, int size) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> count_dist(1, 3);
    std::uniform_int_distribution<int> kind_dist(0, 2);
    const int count = count_dist(rng);
    const double scale = size / 96.0;
    std::vector<Shape> shapes;
    for (int i = 0; i < count; ++i) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            Shape s{};
            s.kind = static_cast<ShapeKind>(kind_dist(rng));
            const double r = (9.0 + 9.0 * unit(rng)) * scale;
            s.angle = unit(rng) * std::numbers::pi;
            switch (s.kind) {
                case ShapeKind::kDisk: s.a = s.b = r; break;
                case ShapeKind::kEllipse:
                    s.a = r;
                    s.b = r * (0.45 + 0.25 * unit(rng));
                    break;
                case ShapeKind::kRoundedRect:
                    s.a = r * (0.75 + 0.25 * unit(rng));
                    s.b = r * (0.6 + 0.3 * unit(rng));
                    s.corner = 0.3 * std::min(s.a, s.b);
                    break;
            }
            const double margin = s.bounding_radius() + 2.0;
            if (2.0 * margin >= size) continue;
            s.cy = margin + unit(rng) * (size - 2.0 * margin);
            s.cx = margin + unit(rng) * (size - 2.0 * margin);
            const bool clear = std::none_of(shapes.begin(), shapes.end(), [&](const Shape& o) {
                return std::hypot(o.cy - s.cy, o.cx - s.cx) < o.bounding_radius() + s.bounding_radius() + 3.0;
            });
            if (clear) {
                shapes.push_back(s);
                break;
            }
        }
    }
    return shapes;
}

}  // namespace

std::vector<Sample> make_toy_dataset(int n_samples, TextureFamily family, std::uint64_t seed,
                                     const ToyOptions& options) {
    if (n_samples < 1) throw ValueError("make_toy_dataset: n_samples must be at least 1");
    const int size = options.size;
    // Tissue brightness by shape kind, background below all of them.
    constexpr std::array<double, 3> kTissue = {0.85, 0.62, 0.42};
    constexpr double kBackground = 0.18;
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
        Rng geo = substream(seed, "toy.geometry", static_cast<std::uint64_t>(i));
        Rng tex = substream(seed, std::string("toy.texture.") + std::string(to_string(family)),
                            static_cast<std::uint64_t>(i));
        const std::vector<Shape> shapes = draw_geometry(geo, size);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        Mask mask(size, size, 0);
        Image base(size, size, 0);
        const double bg = kBackground + 0.06 * (unit(tex) - 0.5);
        std::array<double, 3> tissue{};
        for (int k = 0; k < 3; ++k) tissue[k] = kTissue[k] + 0.08 * (unit(tex) - 0.5);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                double v = bg;
                for (const Shape& s : shapes) {
                    if (s.contains(y + 0.5, x + 0.5)) {
                        const int kind = static_cast<int>(s.kind);
                        mask.at(y, x) = options.label_by_kind ? kind + 1 : 1;
                        v = tissue[kind];
                        break;
                    }
                }
                base.at(y, x) = static_cast<Real>(v);
            }
        }

        std::normal_distribution<double> normal(0.0, 1.0);
        Image img(size, size);
        switch (family) {
            case TextureFamily::kFlat:
                for (std::size_t j = 0; j < img.size(); ++j) img.v[j] = static_cast<Real>(base.v[j] + 0.02 * normal(tex));
                break;
            case TextureFamily::kStriped: {
                const double period = 5.0 + 5.0 * unit(tex);
                const double phi = unit(tex) * std::numbers::pi;
                const double phase = unit(tex) * 2.0 * std::numbers::pi;
                const double amp = 0.25;
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        const double t = (x * std::cos(phi) + y * std::sin(phi)) / period;
                        img.at(y, x) = static_cast<Real>(base.at(y, x) + amp * std::sin(2.0 * std::numbers::pi * t + phase) +
                                                         0.02 * normal(tex));
                    }
                }
                break;
            }
            case TextureFamily::kNoisy:
                for (std::size_t j = 0; j < img.size(); ++j) img.v[j] = static_cast<Real>(base.v[j] + 0.2 * normal(tex));
                break;
            case TextureFamily::kGradient: {
                const double phi = unit(tex) * 2.0 * std::numbers::pi;
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        const double t = ((x - size / 2.0) * std::cos(phi) + (y - size / 2.0) * std::sin(phi)) / size + 0.5;
                        img.at(y, x) = static_cast<Real>(base.at(y, x) * (0.4 + 1.2 * std::clamp(t, 0.0, 1.0)) +
                                                         0.02 * normal(tex));
                    }
                }
                break;
            }
            case TextureFamily::kInverted:
                for (std::size_t j = 0; j < img.size(); ++j) img.v[j] = static_cast<Real>(1.0 - base.v[j] + 0.02 * normal(tex));
                break;
        }
        for (Real& v : img.v) v = std::clamp(v, Real(0), Real(1));
        out.push_back(Sample{std::move(img), std::move(mask), std::string(to_string(family)), {}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

DatasetSplit split_source(const std::vector<Sample>& samples, double ratio, std::uint64_t seed) {
    if (samples.size() < 2) throw ValueError("split_source: need at least two samples");
    if (!(ratio > 0.0 && ratio < 1.0 + 1e-12)) throw ValueError("split_source: ratio must lie in (0, 1]");
    // Group by volume id; samples without one form singleton groups.
    std::vector<std::vector<std::size_t>> groups;
    std::map<std::string, std::size_t> by_volume;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string& vid = samples[i].volume_id;
        if (vid.empty()) {
            groups.push_back({i});
            continue;
        }
        auto [it, inserted] = by_volume.try_emplace(vid, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    Rng rng = substream(seed, "split");
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(groups.size())));
    if (n_train == 0 || n_train >= groups.size()) {
        throw ValueError("split_source: ratio " + std::to_string(ratio) + " leaves an empty partition");
    }
    DatasetSplit split;
    split.seed = seed;
    for (std::size_t g = 0; g < order.size(); ++g) {
        auto& dst = g < n_train ? split.train : split.val;
        for (std::size_t i : groups[order[g]]) dst.push_back(samples[i]);
    }
    return split;
}

}  // namespace advsdg::data
