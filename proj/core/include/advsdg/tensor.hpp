// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advsdg/errors.hpp"

namespace advsdg {

using Real = float;

/// Dense NCHW array. The only storage type the networks operate on.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, T fill = T{})
        : n_(n), c_(c), h_(h), w_(w),
          data_(static_cast<std::size_t>(n) * c * h * w, fill) {
        if (n < 0 || c < 0 || h < 0 || w < 0) {
            throw ShapeError("negative tensor extent");
        }
    }

    [[nodiscard]] int n() const noexcept { return n_; }
    [[nodiscard]] int c() const noexcept { return c_; }
    [[nodiscard]] int h() const noexcept { return h_; }
    [[nodiscard]] int w() const noexcept { return w_; }
    [[nodiscard]] std::array<int, 4> shape() const noexcept { return {n_, c_, h_, w_}; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(h_) * w_;
    }

    [[nodiscard]] T* data() noexcept { return data_.data(); }
    [[nodiscard]] const T* data() const noexcept { return data_.data(); }
    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
    [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

    [[nodiscard]] T* plane(int n, int c) noexcept {
        return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size();
    }
    [[nodiscard]] const T* plane(int n, int c) const noexcept {
        return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size();
    }
    /// All channels of one batch element, contiguous.
    [[nodiscard]] T* sample(int n) noexcept { return plane(n, 0); }
    [[nodiscard]] const T* sample(int n) const noexcept { return plane(n, 0); }
    [[nodiscard]] std::size_t sample_size() const noexcept { return c_ * plane_size(); }

    T& operator()(int n, int c, int y, int x) noexcept {
        assert(n < n_ && c < c_ && y < h_ && x < w_);
        return plane(n, c)[static_cast<std::size_t>(y) * w_ + x];
    }
    const T& operator()(int n, int c, int y, int x) const noexcept {
        assert(n < n_ && c < c_ && y < h_ && x < w_);
        return plane(n, c)[static_cast<std::size_t>(y) * w_ + x];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] bool same_shape(const Tensor& o) const noexcept {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }
    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T{}); }

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const {
        Tensor<U> out(n_, c_, h_, w_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

/// Row-major dense matrix used for patch embeddings ([P, D]).
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] int cols() const noexcept { return cols_; }
    [[nodiscard]] T* data() noexcept { return data_.data(); }
    [[nodiscard]] const T* data() const noexcept { return data_.data(); }
    [[nodiscard]] std::span<T> row(int r) noexcept {
        return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }
    [[nodiscard]] std::span<const T> row(int r) const noexcept {
        return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }
    T& operator()(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const noexcept {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    int rows_ = 0, cols_ = 0;
    std::vector<T> data_;
};

/// Single-channel 2D raster, row-major [H, W].
template <typename T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}

    T& at(int y, int x) noexcept { return v[static_cast<std::size_t>(y) * w + x]; }
    const T& at(int y, int x) const noexcept { return v[static_cast<std::size_t>(y) * w + x]; }
    [[nodiscard]] std::size_t size() const noexcept { return v.size(); }
    [[nodiscard]] bool same_shape(const Grid<T>& o) const noexcept { return h == o.h && w == o.w; }

    friend bool operator==(const Grid&, const Grid&) = default;
};

using Image = Grid<Real>;
using Mask = Grid<std::int32_t>;

/// Batch of integer label maps [B, H, W].
struct LabelMask {
    int n = 0;
    int h = 0;
    int w = 0;
    std::vector<std::int32_t> labels;

    LabelMask() = default;
    LabelMask(int batch, int height, int width, std::int32_t fill = 0)
        : n(batch), h(height), w(width),
          labels(static_cast<std::size_t>(batch) * height * width, fill) {}

    std::int32_t& at(int b, int y, int x) noexcept {
        return labels[(static_cast<std::size_t>(b) * h + y) * w + x];
    }
    std::int32_t at(int b, int y, int x) const noexcept {
        return labels[(static_cast<std::size_t>(b) * h + y) * w + x];
    }
    [[nodiscard]] std::span<const std::int32_t> slice(int b) const noexcept {
        return {labels.data() + static_cast<std::size_t>(b) * h * w, static_cast<std::size_t>(h) * w};
    }

    friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// Per-pixel class probabilities [B, K, H, W]; each pixel lies on the simplex.
template <typename T>
struct SoftPrediction {
    Tensor<T> probs;

    [[nodiscard]] int classes() const noexcept { return probs.c(); }
};

inline std::string shape_string(const std::array<int, 4>& s) {
    return "[" + std::to_string(s[0]) + ", " + std::to_string(s[1]) + ", " + std::to_string(s[2]) +
           ", " + std::to_string(s[3]) + "]";
}

}  // namespace advsdg
