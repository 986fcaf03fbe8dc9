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
#include "nvs/renderer.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

/// Procedural scenes with analytic density/feature fields. These are the
/// ground-truth substrate for every rendering check: the field has a closed
/// form, so fine quadrature gives a reference image to any accuracy.
struct Primitive {
    enum class Shape { kBox, kSphere };
    Shape shape = Shape::kBox;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d half_extents = Eigen::Vector3d::Ones();  // box
    double radius = 1.0;                                     // sphere
    double density = 1.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();  // in [-1, 1]
    Eigen::VectorXd extra;  // channels beyond color, zero-sized means all-zero

    bool contains(const Eigen::Vector3d& p) const {
        if (shape == Shape::kBox) {
            const Eigen::Vector3d d = (p - center).cwiseAbs();
            return d.x() <= half_extents.x() && d.y() <= half_extents.y() &&
                   d.z() <= half_extents.z();
        }
        return (p - center).norm() <= radius;
    }
};

struct ToyScene {
    std::vector<Primitive> primitives;
    int feature_channels = 16;  // 3 color channels + zero-padded extras

    void validate() const {
        if (primitives.empty())
            throw std::invalid_argument("ToyScene: needs at least one primitive");
        if (feature_channels < 3)
            throw std::invalid_argument("ToyScene: needs at least 3 channels");
        for (const auto& p : primitives)
            if (p.density < 0.0)
                throw std::invalid_argument("ToyScene: negative density");
    }
};

struct FieldSample {
    double tau = 0.0;
    Eigen::VectorXd feature;
};

/// Density is the sum over containing primitives; the feature is their
/// density-weighted mean (zero where density is zero).
inline FieldSample scene_field(const ToyScene& scene, const Eigen::Vector3d& point) {
    const int c = scene.feature_channels;
    FieldSample out;
    out.feature = Eigen::VectorXd::Zero(c);
    for (const auto& prim : scene.primitives) {
        if (!prim.contains(point)) continue;
        out.tau += prim.density;
        Eigen::VectorXd f = Eigen::VectorXd::Zero(c);
        f.head<3>() = prim.color;
        const int n_extra = std::min<int>(int(prim.extra.size()), c - 3);
        if (n_extra > 0) f.segment(3, n_extra) = prim.extra.head(n_extra);
        out.feature += prim.density * f;
    }
    if (out.tau > 0.0) out.feature /= out.tau;
    return out;
}

struct GroundTruthRender {
    Tensor image;  // 3 x H x W, color channels of the composited feature
    Tensor alpha;  // H x W
};

/// Brute-force reference render: midpoint quadrature of the analytic field
/// with n_fine samples per ray. Deliberately simple; everything else is
/// measured against it.
inline GroundTruthRender render_ground_truth(const ToyScene& scene,
                                             const Camera& camera,
                                             int n_fine = 4096) {
    scene.validate();
    camera.validate();
    if (n_fine < 1) throw std::invalid_argument("render_ground_truth: n_fine >= 1");

    const uint32_t h = uint32_t(camera.height), w = uint32_t(camera.width);
    GroundTruthRender out;
    out.image = Tensor({3, h, w});
    out.alpha = Tensor({h, w});
    const std::vector<Ray> rays = camera_rays(camera);

    parallel_for(rays.size(), [&](size_t px) {
        const Ray& ray = rays[px];
        const double step = (ray.t_far - ray.t_near) / double(n_fine);
        Eigen::ArrayXd taus(n_fine);
        Eigen::ArrayXd deltas = Eigen::ArrayXd::Constant(n_fine, step);
        Eigen::MatrixXd feats(3, n_fine);
        for (int i = 0; i < n_fine; ++i) {
            const double t = ray.t_near + (double(i) + 0.5) * step;
            const FieldSample s = scene_field(scene, ray.at(t));
            taus[i] = s.tau;
            feats.col(i) = s.feature.head<3>();
        }
        deltas[n_fine - 1] = ray.t_far - (ray.t_near + (double(n_fine) - 0.5) * step);
        const CompositeResult res = composite(taus, feats, deltas);
        const size_t plane = size_t(h) * size_t(w);
        for (int ch = 0; ch < 3; ++ch)
            out.image.data()[size_t(ch) * plane + px] = float(res.feature[ch]);
        out.alpha.data()[px] = float(res.alpha);
    });
    return out;
}

/// Minimum density written into encoded volumes; keeps the softplus inverse
/// finite for empty space while staying far below every test tolerance.
inline constexpr double kEncodeDensityFloor = 1e-7;

/// Samples the analytic field at every voxel center of the camera frustum
/// grid and packs it for DecoderMlp::passthrough: channel 0 holds
/// softplus_inverse(tau) + bias_shift, channels 1..c-1 hold the first c-1
/// feature channels. The decoded feature channel c-1 reads back as zero,
/// which matches the harness scenes (their trailing channels are zero).
inline FeatureVolume synthetic_encode(const ToyScene& scene, const Camera& camera,
                                      int c = 16, int d = 64,
                                      double bias_shift = DecoderMlp::kDefaultBiasShift) {
    scene.validate();
    camera.validate();
    if (c != scene.feature_channels)
        throw std::invalid_argument("synthetic_encode: channel count mismatch");

    FeatureVolume vol;
    vol.source_camera = camera;
    vol.data = Tensor({uint32_t(c), uint32_t(d), uint32_t(camera.height),
                       uint32_t(camera.width)});
    const int h = camera.height, w = camera.width;
    const size_t plane = size_t(h) * size_t(w);
    const size_t slab = size_t(d) * plane;

    parallel_for(size_t(d), [&](size_t k) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const Eigen::Vector3d p = vol.voxel_center(int(k), i, j);
                const FieldSample s = scene_field(scene, p);
                const double tau = std::max(s.tau, kEncodeDensityFloor);
                const size_t base = k * plane + size_t(i) * w + size_t(j);
                vol.data.data()[base] = float(softplus_inverse(tau) + bias_shift);
                for (int m = 0; m + 1 < c; ++m)
                    vol.data.data()[size_t(m + 1) * slab + base] = float(s.feature[m]);
            }
        }
    });
    return vol;
}

/// Camera on an orbit looking at a target point. Azimuth rotates about the
/// world y axis (0 degrees = looking from -z towards +z); positive elevation
/// raises the camera above the target ("up" is world -y).
inline Camera orbit_camera(double radius, double azimuth_deg, double elevation_deg,
                           const Eigen::Vector3d& target, double fov_y_deg,
                           int width, int height, double near, double far) {
    const double az = azimuth_deg * Camera::kDegToRad;
    const double el = elevation_deg * Camera::kDegToRad;
    const Eigen::Vector3d offset(-radius * std::cos(el) * std::sin(az),
                                 -radius * std::sin(el),
                                 -radius * std::cos(el) * std::cos(az));
    const Eigen::Vector3d pos = target + offset;
    const Eigen::Vector3d fwd = (target - pos).normalized();
    Eigen::Vector3d down_hint(0.0, 1.0, 0.0);
    if (std::abs(fwd.dot(down_hint)) > 0.999) down_hint = Eigen::Vector3d(0.0, 0.0, 1.0);
    const Eigen::Vector3d y_cam = (down_hint - down_hint.dot(fwd) * fwd).normalized();
    const Eigen::Vector3d x_cam = y_cam.cross(fwd);

    Camera cam;
    cam.pose.setIdentity();
    cam.pose.block<3, 1>(0, 0) = x_cam;
    cam.pose.block<3, 1>(0, 1) = y_cam;
    cam.pose.block<3, 1>(0, 2) = fwd;
    cam.pose.block<3, 1>(0, 3) = pos;
    cam.fov_y_deg = fov_y_deg;
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    return cam;
}

/// Small object scene used across tests and the demo tooling: two boxes and
/// a sphere with distinct colors near the origin.
inline ToyScene demo_scene(int channels = 16) {
    ToyScene scene;
    scene.feature_channels = channels;
    Primitive red;
    red.shape = Primitive::Shape::kBox;
    red.center = Eigen::Vector3d(-0.25, 0.0, 0.1);
    red.half_extents = Eigen::Vector3d(0.22, 0.3, 0.18);
    red.density = 2.5;
    red.color = Eigen::Vector3d(0.8, -0.4, -0.4);
    Primitive green;
    green.shape = Primitive::Shape::kBox;
    green.center = Eigen::Vector3d(0.3, 0.15, -0.05);
    green.half_extents = Eigen::Vector3d(0.18, 0.22, 0.25);
    green.density = 1.8;
    green.color = Eigen::Vector3d(-0.5, 0.7, -0.2);
    Primitive blue;
    blue.shape = Primitive::Shape::kSphere;
    blue.center = Eigen::Vector3d(0.05, -0.25, -0.15);
    blue.radius = 0.28;
    blue.density = 3.0;
    blue.color = Eigen::Vector3d(-0.3, -0.2, 0.9);
    scene.primitives = {red, green, blue};
    return scene;
}

/// Axis-aligned slab of homogeneous density covering z in [z0, z1] and a
/// wide span in x/y; the workhorse for analytic transmittance checks.
inline ToyScene slab_scene(double z0, double z1, double tau,
                           const Eigen::Vector3d& color = Eigen::Vector3d(0.5, 0.0, -0.5),
                           int channels = 16) {
    ToyScene scene;
    scene.feature_channels = channels;
    Primitive slab;
    slab.shape = Primitive::Shape::kBox;
    slab.center = Eigen::Vector3d(0.0, 0.0, 0.5 * (z0 + z1));
    slab.half_extents = Eigen::Vector3d(50.0, 50.0, 0.5 * (z1 - z0));
    slab.density = tau;
    slab.color = color;
    scene.primitives = {slab};
    return scene;
}

}  // namespace nvs
