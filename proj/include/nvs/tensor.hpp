// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvs {

/// Dense row-major (C-order) float32 tensor. Small and dumb on purpose:
/// images are 3xHxW, feature images cxHxW, feature volumes cxdxhxw.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<uint32_t> dims)
        : dims_(std::move(dims)), data_(checked_numel(dims_), 0.0f) {}

    Tensor(std::vector<uint32_t> dims, std::vector<float> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != checked_numel(dims_))
            throw std::invalid_argument("Tensor: payload size does not match dims");
    }

    static Tensor zeros(std::initializer_list<uint32_t> dims) {
        return Tensor(std::vector<uint32_t>(dims));
    }

    static Tensor full(std::initializer_list<uint32_t> dims, float value) {
        Tensor t{std::vector<uint32_t>(dims)};
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<uint32_t>& dims() const { return dims_; }
    uint32_t dim(size_t i) const { return dims_.at(i); }
    size_t rank() const { return dims_.size(); }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    // Indexed access; rank must match the argument count.
    float& at(size_t i0) { return data_[offset({i0})]; }
    float& at(size_t i0, size_t i1) { return data_[offset({i0, i1})]; }
    float& at(size_t i0, size_t i1, size_t i2) { return data_[offset({i0, i1, i2})]; }
    float& at(size_t i0, size_t i1, size_t i2, size_t i3) {
        return data_[offset({i0, i1, i2, i3})];
    }
    float at(size_t i0) const { return data_[offset({i0})]; }
    float at(size_t i0, size_t i1) const { return data_[offset({i0, i1})]; }
    float at(size_t i0, size_t i1, size_t i2) const { return data_[offset({i0, i1, i2})]; }
    float at(size_t i0, size_t i1, size_t i2, size_t i3) const {
        return data_[offset({i0, i1, i2, i3})];
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](float v) { return std::isfinite(v); });
    }

private:
    static size_t checked_numel(const std::vector<uint32_t>& dims) {
        size_t n = 1;
        for (uint32_t d : dims) {
            if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
            if (n > SIZE_MAX / d) throw std::invalid_argument("Tensor: dimension overflow");
            n *= d;
        }
        return n;
    }

    size_t offset(std::initializer_list<size_t> idx) const {
        if (idx.size() != dims_.size())
            throw std::invalid_argument("Tensor: index rank mismatch");
        size_t off = 0;
        size_t k = 0;
        for (size_t i : idx) {
            off = off * dims_[k] + i;
            ++k;
        }
        return off;
    }

    std::vector<uint32_t> dims_;
    std::vector<float> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mean_abs_diff: shape mismatch");
    if (a.numel() == 0) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += std::abs(double(a[i]) - double(b[i]));
    return s / double(a.numel());
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i] || std::signbit(a[i]) != std::signbit(b[i])) return false;
    return true;
}

}  // namespace nvs
