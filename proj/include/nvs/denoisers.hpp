// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "nvs/renderer.hpp"
#include "nvs/scene.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

/// The pluggable denoiser contract: given a noisy image y at noise level
/// sigma and optional conditioning, produce a denoised image of the same
/// shape. Implementations must be total for sigma > 0 and return finite
/// output for finite input. Unconditional denoisers ignore `conditioning`;
/// conditional ones may reject a null pointer.
using Denoiser =
    std::function<Tensor(const Tensor& y, const FeatureImage* conditioning,
                         double sigma)>;

/// Exact posterior-mean denoiser for per-element Gaussian data N(mu, s^2).
struct GaussianOracle {
    Tensor mu;
    double s = 1.0;

    void validate() const {
        if (s <= 0.0) throw std::invalid_argument("GaussianOracle: s must be > 0");
    }
};

/// mu + s^2/(s^2 + sigma^2) * (y - mu), elementwise: E[x | y].
inline Tensor gaussian_oracle_denoise(const GaussianOracle& oracle, const Tensor& y,
                                      double sigma) {
    oracle.validate();
    if (!y.same_shape(oracle.mu))
        throw std::invalid_argument("gaussian_oracle_denoise: shape mismatch");
    if (sigma < 0.0) throw std::invalid_argument("gaussian_oracle_denoise: sigma < 0");
    const double s2 = oracle.s * oracle.s;
    const double shrink = s2 / (s2 + sigma * sigma);
    Tensor out = y;
    for (size_t i = 0; i < y.numel(); ++i) {
        const double m = oracle.mu[i];
        out[i] = float(m + shrink * (double(y[i]) - m));
    }
    return out;
}

inline Denoiser make_gaussian_oracle_denoiser(GaussianOracle oracle) {
    oracle.validate();
    return [oracle](const Tensor& y, const FeatureImage*, double sigma) {
        return gaussian_oracle_denoise(oracle, y, sigma);
    };
}

/// Gaussian-mixture posterior mean, elementwise (components couple pixels
/// only through shared responsibilities if means differ per pixel; the
/// responsibilities themselves are computed per element, keeping the closed
/// form exact).
struct MixtureComponent {
    Tensor mean;
    double s = 1.0;
    double weight = 1.0;
};

struct MixtureOracle {
    std::vector<MixtureComponent> components;

    void validate() const {
        if (components.empty())
            throw std::invalid_argument("MixtureOracle: needs >= 1 component");
        double total = 0.0;
        for (const auto& c : components) {
            if (c.s <= 0.0) throw std::invalid_argument("MixtureOracle: s must be > 0");
            if (c.weight <= 0.0)
                throw std::invalid_argument("MixtureOracle: weights must be positive");
            if (!c.mean.same_shape(components.front().mean))
                throw std::invalid_argument("MixtureOracle: mean shape mismatch");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("MixtureOracle: weights must sum to 1");
    }
};

/// Per-element responsibilities r_k ~ w_k N(y; mu_k, s_k^2 + sigma^2),
/// stabilized with log-sum-exp; output sum_k r_k [mu_k + shrink_k (y - mu_k)].
inline Tensor mixture_oracle_denoise(const MixtureOracle& oracle, const Tensor& y,
                                     double sigma) {
    oracle.validate();
    if (!y.same_shape(oracle.components.front().mean))
        throw std::invalid_argument("mixture_oracle_denoise: shape mismatch");
    if (sigma < 0.0) throw std::invalid_argument("mixture_oracle_denoise: sigma < 0");

    const size_t k = oracle.components.size();
    if (k == 1) return gaussian_oracle_denoise(
        GaussianOracle{oracle.components[0].mean, oracle.components[0].s}, y, sigma);

    std::vector<double> var(k), log_w(k);
    for (size_t j = 0; j < k; ++j) {
        var[j] = oracle.components[j].s * oracle.components[j].s + sigma * sigma;
        log_w[j] = std::log(oracle.components[j].weight) - 0.5 * std::log(var[j]);
    }

    Tensor out = y;
    std::vector<double> logp(k);
    for (size_t i = 0; i < y.numel(); ++i) {
        const double yi = y[i];
        double max_logp = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < k; ++j) {
            const double d = yi - double(oracle.components[j].mean[i]);
            logp[j] = log_w[j] - 0.5 * d * d / var[j];
            max_logp = std::max(max_logp, logp[j]);
        }
        double norm = 0.0;
        for (size_t j = 0; j < k; ++j) {
            logp[j] = std::exp(logp[j] - max_logp);
            norm += logp[j];
        }
        double acc = 0.0;
        for (size_t j = 0; j < k; ++j) {
            const double m = oracle.components[j].mean[i];
            const double s2 = oracle.components[j].s * oracle.components[j].s;
            const double shrink = s2 / var[j];
            acc += (logp[j] / norm) * (m + shrink * (yi - m));
        }
        out[i] = float(acc);
    }
    return out;
}

inline Denoiser make_mixture_oracle_denoiser(MixtureOracle oracle) {
    oracle.validate();
    return [oracle](const Tensor& y, const FeatureImage*, double sigma) {
        return mixture_oracle_denoise(oracle, y, sigma);
    };
}

/// Per-element mixture responsibilities summed; exposed for tests.
inline std::vector<double> mixture_responsibilities(const MixtureOracle& oracle,
                                                    double y, double sigma) {
    oracle.validate();
    const size_t k = oracle.components.size();
    std::vector<double> logp(k);
    double max_logp = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < k; ++j) {
        const double var = oracle.components[j].s * oracle.components[j].s + sigma * sigma;
        const double d = y - double(oracle.components[j].mean[0]);
        logp[j] = std::log(oracle.components[j].weight) - 0.5 * std::log(var) -
                  0.5 * d * d / var;
        max_logp = std::max(max_logp, logp[j]);
    }
    double norm = 0.0;
    for (size_t j = 0; j < k; ++j) {
        logp[j] = std::exp(logp[j] - max_logp);
        norm += logp[j];
    }
    for (size_t j = 0; j < k; ++j) logp[j] /= norm;
    return logp;
}

/// Ideal scene denoiser: returns the ground-truth render of the target view
/// and ignores (y, sigma) entirely. Renders are cached per camera; the fill
/// is synchronized and idempotent, so concurrent calls are safe.
class IdealSceneDenoiser {
public:
    explicit IdealSceneDenoiser(ToyScene scene, int n_fine = 1024)
        : scene_(std::move(scene)), n_fine_(n_fine),
          cache_(std::make_shared<Cache>()) {
        scene_.validate();
    }

    Tensor render(const Camera& camera) const {
        const CacheKey key = make_key(camera);
        {
            std::lock_guard<std::mutex> lock(cache_->mutex);
            auto it = cache_->renders.find(key);
            if (it != cache_->renders.end()) return it->second;
        }
        Tensor image = render_ground_truth(scene_, camera, n_fine_).image;
        std::lock_guard<std::mutex> lock(cache_->mutex);
        return cache_->renders.emplace(key, std::move(image)).first->second;
    }

    Denoiser for_camera(const Camera& camera) const {
        IdealSceneDenoiser self = *this;  // shares the cache
        return [self, camera](const Tensor&, const FeatureImage*, double) {
            return self.render(camera);
        };
    }

private:
    using CacheKey = std::vector<double>;
    struct Cache {
        std::mutex mutex;
        std::map<CacheKey, Tensor> renders;
    };

    static CacheKey make_key(const Camera& c) {
        CacheKey key;
        key.reserve(21);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) key.push_back(c.pose(i, j));
        key.push_back(c.fov_y_deg);
        key.push_back(double(c.width));
        key.push_back(double(c.height));
        key.push_back(c.near);
        key.push_back(c.far);
        return key;
    }

    ToyScene scene_;
    int n_fine_;
    std::shared_ptr<Cache> cache_;
};

/// Conditional stand-in denoiser that reads the first three feature-image
/// channels as its scene estimate and blends it with the shrunk noisy input:
///   out = readout * sigma^2/(sigma^2 + s0^2) + y * s0^2/(sigma^2 + s0^2).
/// High sigma trusts the conditioning, sigma = 0 returns y. Requires
/// conditioning; a null feature image is an unconditional call on a
/// conditional denoiser and throws.
inline Tensor feature_readout_denoise(const Tensor& y, const FeatureImage& f,
                                      double sigma, double s0 = 0.5) {
    if (f.channels() < 3)
        throw std::invalid_argument("feature_readout_denoise: needs >= 3 channels");
    if (y.rank() != 3 || y.dim(0) != 3 || int(y.dim(1)) != f.height() ||
        int(y.dim(2)) != f.width())
        throw std::invalid_argument("feature_readout_denoise: shape mismatch");
    const double s02 = s0 * s0;
    const double wf = sigma * sigma / (sigma * sigma + s02);
    const double wy = s02 / (sigma * sigma + s02);
    Tensor out = y;
    const size_t plane = size_t(f.height()) * size_t(f.width());
    for (size_t ch = 0; ch < 3; ++ch)
        for (size_t p = 0; p < plane; ++p)
            out.data()[ch * plane + p] = float(wf * double(f.data.data()[ch * plane + p]) +
                                               wy * double(y.data()[ch * plane + p]));
    return out;
}

inline Denoiser make_feature_readout_denoiser(double s0 = 0.5) {
    return [s0](const Tensor& y, const FeatureImage* conditioning, double sigma) {
        if (conditioning == nullptr)
            throw std::invalid_argument(
                "feature_readout: unconditional call on a conditional denoiser");
        return feature_readout_denoise(y, *conditioning, sigma, s0);
    };
}

}  // namespace nvs
