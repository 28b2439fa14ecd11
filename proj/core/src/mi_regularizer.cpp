// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/mi_regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace advsdg::mi {

PatchLocations sample_patch_locations(int feature_h, int feature_w, int count, Rng& rng) {
    const int area = feature_h * feature_w;
    if (count < 1 || count > area) {
        throw ValueError("cannot sample " + std::to_string(count) + " distinct patches from a " +
                         std::to_string(feature_h) + "x" + std::to_string(feature_w) + " feature map");
    }
    std::vector<int> idx(static_cast<std::size_t>(area));
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first `count` entries are a uniform sample without replacement.
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<int> pick(i, area - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    PatchLocations loc;
    loc.feature_h = feature_h;
    loc.feature_w = feature_w;
    for (int i = 0; i < count; ++i) loc.cells.emplace_back(idx[i] / feature_w, idx[i] % feature_w);
    return loc;
}

namespace {

template <typename T>
void check_features(const Matrix<T>& f_src, const Matrix<T>& f_syn, double tau) {
    if (!(tau > 0.0)) throw ValueError("contrastive loss: temperature must be positive");
    if (f_src.rows() != f_syn.rows() || f_src.cols() != f_syn.cols()) {
        throw ShapeError("contrastive loss: feature matrices differ in shape");
    }
    if (f_src.rows() < 2) throw ValueError("contrastive loss: need at least two patches");
    for (const Matrix<T>* f : {&f_src, &f_syn}) {
        for (int r = 0; r < f->rows(); ++r) {
            double sq = 0.0;
            for (T v : f->row(r)) sq += static_cast<double>(v) * v;
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-3) {
                throw ValueError("contrastive loss: row " + std::to_string(r) + " is not L2-normalized");
            }
        }
    }
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

template <typename T>
ContrastiveResult evaluate(const Matrix<T>& f_src, const Matrix<T>& f_syn, double tau,
                           NegativeForm form, bool with_grad) {
    check_features(f_src, f_syn, tau);
    const int p_count = f_src.rows();
    const int d = f_src.cols();
    ContrastiveResult res;
    if (with_grad) {
        res.d_source = Matrix<double>(p_count, d);
        res.d_synth = Matrix<double>(p_count, d);
    }
    std::vector<double> logits(static_cast<std::size_t>(p_count));
    const double inv_p = 1.0 / p_count;
    for (int p = 0; p < p_count; ++p) {
        // logits[p] is the positive pair; the others are negatives.
        for (int n = 0; n < p_count; ++n) {
            if (n == p || form == NegativeForm::kQueryVsSource) {
                logits[n] = dot(f_syn.row(p), f_src.row(n)) / tau;
            } else {
                logits[n] = dot(f_src.row(p), f_src.row(n)) / tau;
            }
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        const double lse = mx + std::log(z);
        res.loss += (logits[p] - lse) * inv_p;
        if (!with_grad) continue;
        for (int n = 0; n < p_count; ++n) {
            const double soft = std::exp(logits[n] - lse);
            const double g = ((n == p ? 1.0 : 0.0) - soft) * inv_p / tau;
            const bool query_pair = n == p || form == NegativeForm::kQueryVsSource;
            auto lhs = query_pair ? f_syn.row(p) : f_src.row(p);
            auto dl = query_pair ? res.d_synth.row(p) : res.d_source.row(p);
            auto rhs = f_src.row(n);
            auto dr = res.d_source.row(n);
            for (int k = 0; k < d; ++k) {
                dl[k] += g * rhs[k];
                dr[k] += g * lhs[k];
            }
        }
    }
    return res;
}

}  // namespace

template <typename T>
double contrastive_mi_loss(const Matrix<T>& f_src, const Matrix<T>& f_syn, double tau,
                           NegativeForm form) {
    return evaluate(f_src, f_syn, tau, form, false).loss;
}

template <typename T>
ContrastiveResult contrastive_mi_loss_grad(const Matrix<T>& f_src, const Matrix<T>& f_syn,
                                           double tau, NegativeForm form) {
    return evaluate(f_src, f_syn, tau, form, true);
}

template double contrastive_mi_loss<float>(const Matrix<float>&, const Matrix<float>&, double,
                                           NegativeForm);
template double contrastive_mi_loss<double>(const Matrix<double>&, const Matrix<double>&, double,
                                            NegativeForm);
template ContrastiveResult contrastive_mi_loss_grad<float>(const Matrix<float>&, const Matrix<float>&,
                                                           double, NegativeForm);
template ContrastiveResult contrastive_mi_loss_grad<double>(const Matrix<double>&,
                                                            const Matrix<double>&, double, NegativeForm);

// ---------------------------------------------------------------------------
// PatchEncoder

template <typename T>
PatchEncoder<T>::PatchEncoder(const PatchEncoderOptions& options, Rng& init_rng) : options_(options) {
    int in = options.image_channels;
    for (int i = 0; i < 3; ++i) {
        convs_[i] = nn::Conv2d<T>("mi.enc" + std::to_string(i), in, options.widths[i], 3, 2, 1);
        convs_[i].init_kaiming(init_rng, options.leaky_slope);
        in = options.widths[i];
    }
    head_weight_ = nn::Parameter<T>("mi.head.weight", options.embed_dim, in, 1, 1);
    head_bias_ = nn::Parameter<T>("mi.head.bias", 1, options.embed_dim, 1, 1);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    for (T& v : head_weight_.value.values()) v = static_cast<T>(dist(init_rng));
}

template <typename T>
std::pair<int, int> PatchEncoder<T>::feature_extent(int h, int w) const {
    for (const auto& c : convs_) {
        h = c.output_extent(h);
        w = c.output_extent(w);
    }
    return {h, w};
}

template <typename T>
Tensor<T> PatchEncoder<T>::encode(const Tensor<T>& image, Cache* cache) const {
    const T slope = static_cast<T>(options_.leaky_slope);
    Tensor<T> h = image;
    for (int i = 0; i < 3; ++i) {
        Tensor<T> pre = convs_[i].forward(h);
        Tensor<T> act = nn::leaky_relu(pre, slope);
        if (cache != nullptr) {
            cache->block_inputs[i] = std::move(h);
            cache->pre_activations[i] = std::move(pre);
        }
        h = std::move(act);
    }
    return h;
}

template <typename T>
std::vector<Matrix<T>> PatchEncoder<T>::forward(const Tensor<T>& image, const PatchLocations& locations,
                                                Cache* cache) const {
    Tensor<T> feat = encode(image, cache);
    if (locations.feature_h != feat.h() || locations.feature_w != feat.w()) {
        throw ShapeError("patch locations were drawn for a " + std::to_string(locations.feature_h) + "x" +
                         std::to_string(locations.feature_w) + " map, encoder produced " +
                         std::to_string(feat.h()) + "x" + std::to_string(feat.w()));
    }
    for (const auto& [y, x] : locations.cells) {
        if (y < 0 || x < 0 || y >= feat.h() || x >= feat.w()) {
            throw ValueError("patch location (" + std::to_string(y) + ", " + std::to_string(x) +
                             ") is out of bounds");
        }
    }
    const int p_count = locations.count();
    const int channels = feat.c();
    const int d = options_.embed_dim;
    std::vector<Matrix<T>> out;
    if (cache != nullptr) {
        cache->locations = locations;
        cache->gathered.clear();
        cache->embeddings.clear();
        cache->norms.clear();
    }
    for (int n = 0; n < feat.n(); ++n) {
        Matrix<T> gathered(p_count, channels);
        for (int p = 0; p < p_count; ++p) {
            const auto [y, x] = locations.cells[p];
            for (int c = 0; c < channels; ++c) gathered(p, c) = feat(n, c, y, x);
        }
        Matrix<T> emb(p_count, d);
        Matrix<T> normalized(p_count, d);
        std::vector<T> norms(static_cast<std::size_t>(p_count));
        for (int p = 0; p < p_count; ++p) {
            T sq = 0;
            for (int j = 0; j < d; ++j) {
                T acc = head_bias_.value[j];
                const T* wrow = head_weight_.value.data() + static_cast<std::size_t>(j) * channels;
                for (int c = 0; c < channels; ++c) acc += wrow[c] * gathered(p, c);
                emb(p, j) = acc;
                sq += acc * acc;
            }
            const T norm = std::sqrt(sq) + T(1e-12);
            norms[p] = norm;
            for (int j = 0; j < d; ++j) normalized(p, j) = emb(p, j) / norm;
        }
        out.push_back(std::move(normalized));
        if (cache != nullptr) {
            cache->gathered.push_back(std::move(gathered));
            cache->embeddings.push_back(std::move(emb));
            cache->norms.push_back(std::move(norms));
        }
    }
    if (cache != nullptr) cache->features = std::move(feat);
    return out;
}

template <typename T>
Tensor<T> PatchEncoder<T>::backward(const Cache& cache, const std::vector<Matrix<T>>& d_features,
                                    bool need_input_grad, bool accumulate) {
    const Tensor<T>& feat = cache.features;
    const int channels = feat.c();
    const int d = options_.embed_dim;
    const int p_count = cache.locations.count();
    Tensor<T> dfeat(feat.n(), feat.c(), feat.h(), feat.w());
    for (int n = 0; n < feat.n(); ++n) {
        const Matrix<T>& emb = cache.embeddings[n];
        const Matrix<T>& gathered = cache.gathered[n];
        const Matrix<T>& g = d_features[n];
        for (int p = 0; p < p_count; ++p) {
            const T norm = cache.norms[n][p];
            // y = e / |e|  =>  de = (g - y (y . g)) / |e|
            T ydotg = 0;
            for (int j = 0; j < d; ++j) ydotg += emb(p, j) / norm * g(p, j);
            const auto [y, x] = cache.locations.cells[p];
            for (int j = 0; j < d; ++j) {
                const T de = (g(p, j) - emb(p, j) / norm * ydotg) / norm;
                if (de == T{}) continue;
                T* wrow = head_weight_.value.data() + static_cast<std::size_t>(j) * channels;
                if (accumulate) {
                    T* gwrow = head_weight_.grad.data() + static_cast<std::size_t>(j) * channels;
                    for (int c = 0; c < channels; ++c) gwrow[c] += de * gathered(p, c);
                    head_bias_.grad[j] += de;
                }
                for (int c = 0; c < channels; ++c) dfeat(n, c, y, x) += de * wrow[c];
            }
        }
    }
    const T slope = static_cast<T>(options_.leaky_slope);
    Tensor<T> dh = std::move(dfeat);
    for (int i = 2; i >= 0; --i) {
        Tensor<T> dpre = nn::leaky_relu_backward(cache.pre_activations[i], dh, slope);
        dh = convs_[i].backward(cache.block_inputs[i], dpre, i > 0 || need_input_grad, accumulate);
    }
    return need_input_grad ? dh : Tensor<T>{};
}

template <typename T>
Grid<T> PatchEncoder<T>::similarity_map(const Tensor<T>& query_image, std::pair<int, int> query,
                                        const Tensor<T>& other_image) const {
    const auto [fh, fw] = feature_extent(query_image.h(), query_image.w());
    PatchLocations all;
    all.feature_h = fh;
    all.feature_w = fw;
    for (int y = 0; y < fh; ++y) {
        for (int x = 0; x < fw; ++x) all.cells.emplace_back(y, x);
    }
    const Matrix<T> q = forward(query_image, all).front();
    const Matrix<T> o = forward(other_image, all).front();
    const int qi = query.first * fw + query.second;
    if (qi < 0 || qi >= q.rows()) throw ValueError("similarity_map: query cell out of bounds");
    Grid<T> out(fh, fw);
    for (int i = 0; i < o.rows(); ++i) {
        T s = 0;
        for (int j = 0; j < o.cols(); ++j) s += q(qi, j) * o(i, j);
        out.v[i] = s;
    }
    return out;
}

template <typename T>
nn::ParameterList<T> PatchEncoder<T>::parameters() {
    nn::ParameterList<T> out;
    for (auto& c : convs_) {
        out.push_back(&c.weight);
        out.push_back(&c.bias);
    }
    out.push_back(&head_weight_);
    out.push_back(&head_bias_);
    return out;
}

template <typename T>
std::uint64_t PatchEncoder<T>::parameter_hash() const {
    return nn::parameter_hash(const_cast<PatchEncoder*>(this)->parameters());
}

template class PatchEncoder<float>;
template class PatchEncoder<double>;

}  // namespace advsdg::mi
