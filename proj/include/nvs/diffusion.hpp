// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvs/denoisers.hpp"
#include "nvs/rng.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

/// Descending noise levels sigma_0 = sigma_max > ... > sigma_{N-1} =
/// sigma_min, closed by sigma_N = 0. Spacing follows the rho-warped
/// interpolation of EDM (Karras et al. 2022):
///   sigma_i = (smax^(1/rho) + i/(N-1) * (smin^(1/rho) - smax^(1/rho)))^rho.
struct NoiseSchedule {
    std::vector<double> sigmas;  // N + 1 entries, last one 0
    int n_steps = 0;
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double rho = 0.0;
};

inline NoiseSchedule build_schedule(int n, double sigma_max = 80.0,
                                    double sigma_min = 0.002, double rho = 7.0) {
    if (n < 1) throw std::invalid_argument("build_schedule: N must be >= 1");
    if (!(sigma_min > 0.0 && sigma_min < sigma_max))
        throw std::invalid_argument("build_schedule: need 0 < sigma_min < sigma_max");
    if (!(rho > 0.0)) throw std::invalid_argument("build_schedule: rho must be > 0");

    NoiseSchedule s;
    s.n_steps = n;
    s.sigma_max = sigma_max;
    s.sigma_min = sigma_min;
    s.rho = rho;
    s.sigmas.resize(size_t(n) + 1);
    const double inv_rho = 1.0 / rho;
    const double a = std::pow(sigma_max, inv_rho);
    const double b = std::pow(sigma_min, inv_rho);
    for (int i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : double(i) / double(n - 1);
        s.sigmas[size_t(i)] = std::pow(a + t * (b - a), rho);
    }
    // Pin the endpoints; pow round trips are not exact. A one-step schedule
    // is just {sigma_max, 0}.
    s.sigmas[0] = sigma_max;
    if (n >= 2) s.sigmas[size_t(n) - 1] = sigma_min;
    s.sigmas[size_t(n)] = 0.0;
    return s;
}

/// Guidance strength g: 0 is the plain conditional prediction, -1 the
/// unconditional one.
struct GuidanceConfig {
    double g = 0.0;
};

/// Linear extrapolation (1 + g) * d_cond - g * d_uncond. The anchors g = 0
/// and g = -1 short-circuit to the exact inputs; other strengths use the
/// algebraically identical form d_cond + g * (d_cond - d_uncond), which is
/// exact when both predictions agree.
inline Tensor guided_denoise(const Tensor& d_cond, const Tensor& d_uncond, double g) {
    if (!d_cond.same_shape(d_uncond))
        throw std::invalid_argument("guided_denoise: shape mismatch");
    if (g == 0.0) return d_cond;
    if (g == -1.0) return d_uncond;
    Tensor out = d_cond;
    for (size_t i = 0; i < out.numel(); ++i) {
        const double c = d_cond[i];
        out[i] = float(c + g * (c - double(d_uncond[i])));
    }
    return out;
}

/// Conditioning handed to the sampler: the feature image for conditional
/// evaluations and the one substituted for "unconditional" evaluations when
/// guidance needs both (conditional models are trained against a dropout
/// stand-in rather than a missing input). Either may be null.
struct Conditioning {
    const FeatureImage* cond = nullptr;
    const FeatureImage* uncond = nullptr;
};

namespace detail {

inline Tensor guided_eval(const Denoiser& denoiser, const Tensor& y,
                          const Conditioning& cc, double g, double sigma) {
    if (g == 0.0) return denoiser(y, cc.cond, sigma);
    if (g == -1.0) return denoiser(y, cc.uncond, sigma);
    const Tensor d_cond = denoiser(y, cc.cond, sigma);
    const Tensor d_uncond = denoiser(y, cc.uncond, sigma);
    return guided_denoise(d_cond, d_uncond, g);
}

inline Tensor normal_tensor(const std::vector<uint32_t>& dims, RngStream& rng,
                            double stddev) {
    Tensor t{dims};
    for (size_t i = 0; i < t.numel(); ++i) t[i] = float(stddev * rng.normal());
    return t;
}

}  // namespace detail

/// Deterministic 2nd-order (Heun) sampler over the schedule, starting from
/// y_0 ~ N(0, sigma_0^2 I). `step_conditioning` supplies the conditioning
/// for each step; per-step hooks let callers redraw conditioning while
/// keeping the two sub-evaluations of one step consistent.
inline Tensor heun_sample_with(
    const Denoiser& denoiser, const NoiseSchedule& schedule,
    const GuidanceConfig& guidance, RngStream& rng,
    const std::vector<uint32_t>& shape,
    const std::function<Conditioning(int)>& step_conditioning) {
    if (schedule.sigmas.size() < 2)
        throw std::invalid_argument("heun_sample: empty schedule");

    Tensor y = detail::normal_tensor(shape, rng, schedule.sigmas[0]);
    const int n = int(schedule.sigmas.size()) - 1;
    for (int i = 0; i < n; ++i) {
        const double sigma = schedule.sigmas[size_t(i)];
        const double sigma_next = schedule.sigmas[size_t(i) + 1];
        try {
            const Conditioning cc = step_conditioning(i);
            const Tensor denoised =
                detail::guided_eval(denoiser, y, cc, guidance.g, sigma);
            if (!denoised.same_shape(y))
                throw std::runtime_error("denoiser changed the image shape");
            const double dt = sigma_next - sigma;
            Tensor y_euler = y;
            for (size_t p = 0; p < y.numel(); ++p) {
                const double d = (double(y[p]) - double(denoised[p])) / sigma;
                y_euler[p] = float(double(y[p]) + dt * d);
            }
            if (sigma_next > 0.0) {
                const Tensor denoised2 =
                    detail::guided_eval(denoiser, y_euler, cc, guidance.g, sigma_next);
                if (!denoised2.same_shape(y))
                    throw std::runtime_error("denoiser changed the image shape");
                for (size_t p = 0; p < y.numel(); ++p) {
                    const double d = (double(y[p]) - double(denoised[p])) / sigma;
                    const double d2 =
                        (double(y_euler[p]) - double(denoised2[p])) / sigma_next;
                    y[p] = float(double(y[p]) + dt * 0.5 * (d + d2));
                }
            } else {
                y = std::move(y_euler);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("heun_sample: step " + std::to_string(i) + ": " +
                                     e.what());
        }
    }
    return y;
}

inline Tensor heun_sample(const Denoiser& denoiser, const Conditioning& conditioning,
                          const NoiseSchedule& schedule, const GuidanceConfig& guidance,
                          RngStream& rng, const std::vector<uint32_t>& shape) {
    return heun_sample_with(denoiser, schedule, guidance, rng, shape,
                            [&conditioning](int) { return conditioning; });
}

/// Single-denoise inference: start at y_0 = sigma_start * eps (or zero when
/// deterministic) and return D(y_0; sigma_start). Behaves like the mean
/// estimate of the conditional distribution, i.e. like a model trained with
/// a pixelwise MSE objective.
inline Tensor one_step_inference(const Denoiser& denoiser,
                                 const FeatureImage* conditioning, double sigma_start,
                                 RngStream& rng, bool deterministic,
                                 const std::vector<uint32_t>& shape) {
    if (!(sigma_start > 0.0))
        throw std::invalid_argument("one_step_inference: sigma_start must be > 0");
    Tensor y0 = deterministic ? Tensor{shape}
                              : detail::normal_tensor(shape, rng, sigma_start);
    try {
        return denoiser(y0, conditioning, sigma_start);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("one_step_inference: ") + e.what());
    }
}

/// An image plus the noise level it was corrupted with.
struct NoisyImage {
    Tensor data;
    double sigma = 0.0;

    void validate() const {
        if (sigma < 0.0) throw std::invalid_argument("NoisyImage: sigma < 0");
        if (!data.all_finite())
            throw std::invalid_argument("NoisyImage: non-finite data");
    }
};

/// Corrupts a clean image with N(0, sigma^2) noise.
inline NoisyImage make_noisy(const Tensor& clean, double sigma, RngStream& rng) {
    if (sigma < 0.0) throw std::invalid_argument("make_noisy: sigma < 0");
    NoisyImage out{clean, sigma};
    for (size_t i = 0; i < out.data.numel(); ++i)
        out.data[i] = float(double(out.data[i]) + sigma * rng.normal());
    return out;
}

/// Log-normal training noise level: sigma = exp(P_mean + P_std * z).
struct TrainingNoiseSampler {
    double p_mean = -1.0;
    double p_std = 1.4;

    void validate() const {
        if (!(p_std > 0.0))
            throw std::invalid_argument("TrainingNoiseSampler: P_std must be > 0");
    }
};

inline double sample_training_sigma(const TrainingNoiseSampler& sampler,
                                    RngStream& rng) {
    sampler.validate();
    return std::exp(sampler.p_mean + sampler.p_std * rng.normal());
}

/// Optional level-dependent loss weighting. Off by default: the plain
/// objective weights every noise level equally. The EDM-style weight is
/// (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.
struct LossWeighting {
    bool edm = false;
    double sigma_data = 0.5;

    double weight(double sigma) const {
        if (!edm) return 1.0;
        const double num = sigma * sigma + sigma_data * sigma_data;
        const double den = sigma * sigma_data;
        return num / (den * den);
    }
};

/// Single-draw denoising objective: corrupt the target with N(0, sigma^2)
/// noise and return the mean squared error of the denoiser's reconstruction.
inline double denoising_loss(const Denoiser& denoiser, const Tensor& target,
                             const FeatureImage* conditioning, double sigma,
                             RngStream& rng, const LossWeighting& weighting = {}) {
    if (sigma < 0.0) throw std::invalid_argument("denoising_loss: sigma < 0");
    const NoisyImage noisy = make_noisy(target, sigma, rng);
    const Tensor denoised = denoiser(noisy.data, conditioning, sigma);
    if (!denoised.same_shape(target))
        throw std::invalid_argument("denoising_loss: denoiser changed the shape");
    double acc = 0.0;
    for (size_t i = 0; i < target.numel(); ++i) {
        const double d = double(denoised[i]) - double(target[i]);
        acc += d * d;
    }
    return weighting.weight(sigma) * acc / double(target.numel());
}

}  // namespace nvs
