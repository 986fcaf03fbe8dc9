// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nvs/camera.hpp"
#include "nvs/field.hpp"
#include "nvs/parallel.hpp"
#include "nvs/rng.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

enum class DepthSampling { kStratified, kMidpoint };

struct RenderConfig {
    int n_depth_samples = 64;  // 128 in the expensive preset
    DepthSampling sampling_mode = DepthSampling::kStratified;
    bool half_resolution = true;
    uint64_t rng_seed = 0;

    void validate() const {
        if (n_depth_samples < 1)
            throw std::invalid_argument("RenderConfig: n_depth_samples must be >= 1");
    }
};

/// Feature image rendered from a latent field into a target view, plus the
/// accumulated opacity per pixel.
struct FeatureImage {
    Tensor data;   // c x H x W
    Tensor alpha;  // H x W
    Camera target_camera;

    int channels() const { return int(data.dim(0)); }
    int height() const { return int(data.dim(1)); }
    int width() const { return int(data.dim(2)); }
};

/// Ascending depth parameters over [t_near, t_far]: the interval is split
/// into n equal bins; midpoint mode returns bin centers, stratified mode one
/// uniform draw per bin (strictly increasing by construction).
inline std::vector<double> sample_depths(const Ray& ray, const RenderConfig& config,
                                         RngStream& rng) {
    config.validate();
    if (!(ray.t_near < ray.t_far))
        throw std::invalid_argument("sample_depths: t_near must be < t_far");
    const int n = config.n_depth_samples;
    const double h = (ray.t_far - ray.t_near) / double(n);
    std::vector<double> ts(n);
    for (int i = 0; i < n; ++i) {
        const double jitter =
            config.sampling_mode == DepthSampling::kStratified ? rng.uniform() : 0.5;
        ts[i] = ray.t_near + (double(i) + jitter) * h;
    }
    return ts;
}

struct CompositeResult {
    Eigen::VectorXd feature;
    double alpha = 0.0;
};

/// Transmittance-weighted quadrature:
///   alpha_i  = 1 - exp(-tau_i * delta_i)
///   T_i      = prod_{j<i} (1 - alpha_j)
///   weight_i = T_i * alpha_i
/// Returns sum_i weight_i * feature_i and the total weight.
inline CompositeResult composite(const Eigen::ArrayXd& taus,
                                 const Eigen::MatrixXd& features,
                                 const Eigen::ArrayXd& deltas) {
    const Eigen::Index n = taus.size();
    if (features.cols() != n || deltas.size() != n)
        throw std::invalid_argument("composite: size mismatch");
    if ((taus < 0.0).any())
        throw std::invalid_argument("composite: negative density");
    if (n > 0 && (deltas <= 0.0).any())
        throw std::invalid_argument("composite: nonpositive segment length");

    CompositeResult out;
    out.feature = Eigen::VectorXd::Zero(features.rows());
    double transmittance = 1.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = -std::expm1(-taus[i] * deltas[i]);
        const double weight = transmittance * a;
        out.feature += weight * features.col(i);
        total += weight;
        transmittance *= 1.0 - a;
    }
    // total = 1 - prod(1 - alpha_i) up to rounding; trim the float dust so
    // opacity stays in [0, 1].
    out.alpha = std::min(total, 1.0);
    return out;
}

/// Segment lengths for composite: consecutive differences, and the last
/// segment runs to t_far so the quadrature domain stays bounded.
inline Eigen::ArrayXd segment_lengths(const std::vector<double>& ts, double t_far) {
    Eigen::ArrayXd deltas(ts.size());
    for (size_t i = 0; i + 1 < ts.size(); ++i) deltas[i] = ts[i + 1] - ts[i];
    if (!ts.empty()) deltas[ts.size() - 1] = t_far - ts.back();
    return deltas;
}

/// Factor-2 bilinear upsampling, align-corners-off with edge clamping.
/// Built from nested lerps so constant images stay bit-exact.
inline Tensor bilinear_upsample(const Tensor& image) {
    if (image.rank() != 3)
        throw std::invalid_argument("bilinear_upsample: expected c x H x W");
    const uint32_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    auto lerp = [](float a, float b, float t) { return a + t * (b - a); };
    for (uint32_t ch = 0; ch < c; ++ch) {
        for (uint32_t oy = 0; oy < 2 * h; ++oy) {
            const double sy = (double(oy) + 0.5) / 2.0 - 0.5;
            const double cy = std::clamp(sy, 0.0, double(h - 1));
            const uint32_t y0 = uint32_t(cy);
            const uint32_t y1 = std::min(y0 + 1, h - 1);
            const float fy = float(cy - double(y0));
            for (uint32_t ox = 0; ox < 2 * w; ++ox) {
                const double sx = (double(ox) + 0.5) / 2.0 - 0.5;
                const double cx = std::clamp(sx, 0.0, double(w - 1));
                const uint32_t x0 = uint32_t(cx);
                const uint32_t x1 = std::min(x0 + 1, w - 1);
                const float fx = float(cx - double(x0));
                const float top = lerp(image.at(ch, y0, x0), image.at(ch, y0, x1), fx);
                const float bot = lerp(image.at(ch, y1, x0), image.at(ch, y1, x1), fx);
                out.at(ch, oy, ox) = lerp(top, bot, fy);
            }
        }
    }
    return out;
}

/// Volume-renders the latent field into the target view. With
/// half_resolution on, rays are cast on the H/2 x W/2 grid and the result is
/// bilinearly upsampled back to H x W (dimensions must be even). Per-pixel
/// RNG streams are derived from (rng_seed, pixel index), so the result is
/// independent of the parallel schedule.
inline FeatureImage render_feature_image(const FeatureField& field,
                                         const Camera& target,
                                         const RenderConfig& config) {
    config.validate();
    target.validate();
    if (field.volumes.empty())
        throw std::invalid_argument("render_feature_image: no conditioning views");
    for (const auto& v : field.volumes) v.validate();
    field.mlp.validate();

    Camera render_cam = target;
    if (config.half_resolution) {
        if (target.width % 2 != 0 || target.height % 2 != 0)
            throw std::invalid_argument(
                "render_feature_image: half resolution needs even dimensions");
        render_cam = target.resized(target.width / 2, target.height / 2);
    }

    const int c = field.feature_dim();
    const uint32_t rh = uint32_t(render_cam.height);
    const uint32_t rw = uint32_t(render_cam.width);
    Tensor feat({uint32_t(c), rh, rw});
    Tensor alpha({rh, rw});

    const std::vector<Ray> rays = camera_rays(render_cam);
    const RngStream root(config.rng_seed);

    parallel_for(rays.size(), [&](size_t px) {
        RngStream pixel_rng = root.child("pixel", px);
        const Ray& ray = rays[px];
        const std::vector<double> ts = sample_depths(ray, config, pixel_rng);
        const int n = int(ts.size());

        Eigen::MatrixXd ws(c, n);
        for (int i = 0; i < n; ++i)
            ws.col(i) = aggregate(field.volumes, ray.at(ts[i]), field.mode);
        const DecodedBatch decoded = decode_batch(field.mlp, ws);
        const Eigen::ArrayXd deltas = segment_lengths(ts, ray.t_far);
        const CompositeResult res =
            composite(decoded.taus, decoded.features, deltas);

        const size_t plane = size_t(rh) * size_t(rw);
        for (int ch = 0; ch < c; ++ch)
            feat.data()[size_t(ch) * plane + px] = float(res.feature[ch]);
        alpha.data()[px] = float(res.alpha);
    });

    FeatureImage out;
    out.target_camera = target;
    if (config.half_resolution) {
        out.data = bilinear_upsample(feat);
        Tensor a3({1, rh, rw}, alpha.vec());
        Tensor up = bilinear_upsample(a3);
        out.alpha = Tensor({2 * rh, 2 * rw}, up.vec());
    } else {
        out.data = std::move(feat);
        out.alpha = std::move(alpha);
    }
    return out;
}

}  // namespace nvs
