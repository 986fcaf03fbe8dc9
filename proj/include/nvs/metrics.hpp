// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nvs/tensor.hpp"

namespace nvs {

/// Peak signal-to-noise ratio in dB over the given data range (2 for images
/// in [-1, 1]), capped at 120 dB so identical images stay finite.
inline double psnr(const Tensor& a, const Tensor& b, double data_range = 2.0) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        mse += d * d;
    }
    mse /= double(a.numel());
    if (mse == 0.0) return 120.0;
    return std::min(120.0, 10.0 * std::log10(data_range * data_range / mse));
}

namespace detail {

inline std::vector<double> gaussian_kernel_11(double sigma = 1.5) {
    std::vector<double> k(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double x = double(i - 5);
        k[size_t(i)] = std::exp(-0.5 * x * x / (sigma * sigma));
        sum += k[size_t(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace detail

/// Structural similarity with the reference constants: 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, evaluated on windows that fit
/// entirely inside the image and averaged over windows and channels.
inline double ssim(const Tensor& a, const Tensor& b, double data_range = 2.0) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.rank() != 3) throw std::invalid_argument("ssim: expected c x H x W");
    const int c = int(a.dim(0)), h = int(a.dim(1)), w = int(a.dim(2));
    if (h < 11 || w < 11)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    const std::vector<double> kernel = detail::gaussian_kernel_11();
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    double total = 0.0;
    size_t count = 0;
    const size_t plane = size_t(h) * size_t(w);
    for (int ch = 0; ch < c; ++ch) {
        const float* pa = a.data() + size_t(ch) * plane;
        const float* pb = b.data() + size_t(ch) * plane;
        for (int y = 5; y < h - 5; ++y) {
            for (int x = 5; x < w - 5; ++x) {
                double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
                for (int dy = -5; dy <= 5; ++dy) {
                    const double ky = kernel[size_t(dy + 5)];
                    for (int dx = -5; dx <= 5; ++dx) {
                        const double wgt = ky * kernel[size_t(dx + 5)];
                        const double va = pa[size_t(y + dy) * w + size_t(x + dx)];
                        const double vb = pb[size_t(y + dy) * w + size_t(x + dx)];
                        mu_a += wgt * va;
                        mu_b += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                    }
                }
                const double var_a = aa - mu_a * mu_a;
                const double var_b = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den =
                    (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / double(count);
}

/// Per-pixel sample standard deviation (unbiased, K-1 normalization) over
/// K >= 2 images, averaged across channels. Output shape 1 x H x W.
inline Tensor pixel_std_map(const std::vector<Tensor>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("pixel_std_map: needs K >= 2 samples");
    for (const auto& s : samples)
        if (!s.same_shape(samples.front()) || s.rank() != 3)
            throw std::invalid_argument("pixel_std_map: shape mismatch");
    const size_t c = samples.front().dim(0);
    const size_t h = samples.front().dim(1);
    const size_t w = samples.front().dim(2);
    const size_t plane = h * w;
    const double k = double(samples.size());

    Tensor out({1, uint32_t(h), uint32_t(w)});
    for (size_t p = 0; p < plane; ++p) {
        double acc = 0.0;
        for (size_t ch = 0; ch < c; ++ch) {
            double mean = 0.0;
            for (const auto& s : samples) mean += s.data()[ch * plane + p];
            mean /= k;
            double var = 0.0;
            for (const auto& s : samples) {
                const double d = double(s.data()[ch * plane + p]) - mean;
                var += d * d;
            }
            acc += std::sqrt(var / (k - 1.0));
        }
        out[p] = float(acc / double(c));
    }
    return out;
}

/// Mean per-pixel sample variance of a group of images (across pixels,
/// channels and samples; unbiased in the sample dimension).
inline double mean_pixel_variance(const std::vector<Tensor>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("mean_pixel_variance: needs K >= 2 samples");
    const size_t n = samples.front().numel();
    const double k = double(samples.size());
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[i];
        mean /= k;
        double var = 0.0;
        for (const auto& s : samples) {
            const double d = double(s[i]) - mean;
            var += d * d;
        }
        acc += var / (k - 1.0);
    }
    return acc / double(n);
}

/// Variance-versus-distance analysis: each group is (distance, K samples of
/// the same view). Group variances are binned by distance; the result holds
/// per-bin means, the standard deviation within each bin, and a moving
/// average over bins.
struct DistanceVariance {
    std::vector<double> bin_centers;
    std::vector<double> bin_means;
    std::vector<double> bin_stds;
    std::vector<int> bin_counts;
    std::vector<double> moving_average;
};

inline DistanceVariance variance_vs_distance(
    const std::vector<std::pair<double, std::vector<Tensor>>>& groups,
    int n_bins = 8, int window = 3) {
    if (groups.empty())
        throw std::invalid_argument("variance_vs_distance: no groups");
    if (n_bins < 1 || window < 1)
        throw std::invalid_argument("variance_vs_distance: bad bin/window");

    std::vector<std::pair<double, double>> points;  // (distance, variance)
    double lo = groups.front().first, hi = groups.front().first;
    for (const auto& [dist, samples] : groups) {
        points.emplace_back(dist, mean_pixel_variance(samples));
        lo = std::min(lo, dist);
        hi = std::max(hi, dist);
    }
    if (hi == lo) hi = lo + 1.0;

    DistanceVariance out;
    out.bin_centers.resize(size_t(n_bins));
    out.bin_means.assign(size_t(n_bins), 0.0);
    out.bin_stds.assign(size_t(n_bins), 0.0);
    out.bin_counts.assign(size_t(n_bins), 0);
    const double width = (hi - lo) / double(n_bins);
    for (int i = 0; i < n_bins; ++i)
        out.bin_centers[size_t(i)] = lo + (double(i) + 0.5) * width;

    for (const auto& [dist, var] : points) {
        int b = int((dist - lo) / width);
        b = std::clamp(b, 0, n_bins - 1);
        out.bin_means[size_t(b)] += var;
        ++out.bin_counts[size_t(b)];
    }
    for (int b = 0; b < n_bins; ++b)
        if (out.bin_counts[size_t(b)] > 0)
            out.bin_means[size_t(b)] /= double(out.bin_counts[size_t(b)]);
    for (const auto& [dist, var] : points) {
        int b = int((dist - lo) / width);
        b = std::clamp(b, 0, n_bins - 1);
        const double d = var - out.bin_means[size_t(b)];
        out.bin_stds[size_t(b)] += d * d;
    }
    for (int b = 0; b < n_bins; ++b) {
        const int n = out.bin_counts[size_t(b)];
        out.bin_stds[size_t(b)] = n > 1 ? std::sqrt(out.bin_stds[size_t(b)] / double(n - 1)) : 0.0;
    }

    out.moving_average.assign(size_t(n_bins), 0.0);
    const int half = window / 2;
    for (int b = 0; b < n_bins; ++b) {
        double acc = 0.0;
        int cnt = 0;
        for (int j = std::max(0, b - half); j <= std::min(n_bins - 1, b + half); ++j) {
            if (out.bin_counts[size_t(j)] == 0) continue;
            acc += out.bin_means[size_t(j)];
            ++cnt;
        }
        out.moving_average[size_t(b)] = cnt > 0 ? acc / double(cnt) : 0.0;
    }
    return out;
}

}  // namespace nvs
