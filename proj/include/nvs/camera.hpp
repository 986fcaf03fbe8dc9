// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nvs/tensor.hpp"

namespace nvs {

/// Pinhole camera. Convention, fixed for the whole library:
///   - pose is the camera-to-world rigid transform,
///   - camera space is right-handed with +z forward, +x right, +y down,
///   - pixel (ix, iy) has its center at (ix + 0.5, iy + 0.5),
///   - fov_y is the vertical field of view in degrees,
///   - near/far bound camera-space z (not ray arclength), so frustum slices
///     are planes of constant depth.
struct Camera {
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
    double fov_y_deg = 60.0;
    int width = 128;
    int height = 128;
    double near = 0.1;
    double far = 10.0;

    Eigen::Matrix3d rotation() const { return pose.block<3, 3>(0, 0); }
    Eigen::Vector3d position() const { return pose.block<3, 1>(0, 3); }
    Eigen::Vector3d forward() const { return pose.block<3, 1>(0, 2); }

    /// Focal length in pixels (square pixels; vertical fov fixes it).
    double focal_px() const {
        return 0.5 * double(height) / std::tan(0.5 * fov_y_deg * kDegToRad);
    }
    double cx() const { return 0.5 * double(width); }
    double cy() const { return 0.5 * double(height); }

    Camera resized(int w, int h) const {
        Camera c = *this;
        c.width = w;
        c.height = h;
        return c;
    }

    void validate() const {
        const Eigen::Matrix3d r = rotation();
        const Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
        if (err.cwiseAbs().maxCoeff() >= 1e-6)
            throw std::invalid_argument("Camera: rotation block is not orthonormal");
        if (!(near >= 0.0 && near < far))
            throw std::invalid_argument("Camera: require 0 <= near < far");
        if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0))
            throw std::invalid_argument("Camera: fov_y out of (0, 180) degrees");
        if (width < 1 || height < 1)
            throw std::invalid_argument("Camera: image dimensions must be >= 1");
        if (!pose.allFinite())
            throw std::invalid_argument("Camera: non-finite pose");
    }

    static constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
};

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction;  // unit length, world space
    double t_near = 0.0;
    double t_far = 0.0;

    Eigen::Vector3d at(double t) const { return origin + t * direction; }
};

/// Continuous pixel coordinates plus camera-space depth of a world point.
struct Projection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
    bool behind = false;  // depth <= 0; caller treats as outside the frustum
};

/// One ray per pixel through the pixel center, row-major (v outer, u inner).
/// t_near/t_far are scaled by the camera-space direction so that depth along
/// the optical axis spans [near, far] exactly.
inline std::vector<Ray> camera_rays(const Camera& cam) {
    cam.validate();
    const double f = cam.focal_px();
    const double cx = cam.cx();
    const double cy = cam.cy();
    const Eigen::Matrix3d rot = cam.rotation();
    const Eigen::Vector3d origin = cam.position();

    std::vector<Ray> rays;
    rays.reserve(size_t(cam.width) * size_t(cam.height));
    for (int iy = 0; iy < cam.height; ++iy) {
        for (int ix = 0; ix < cam.width; ++ix) {
            const double x = (double(ix) + 0.5 - cx) / f;
            const double y = (double(iy) + 0.5 - cy) / f;
            const Eigen::Vector3d dir_cam(x, y, 1.0);
            const double norm = dir_cam.norm();
            Ray r;
            r.origin = origin;
            r.direction = rot * (dir_cam / norm);
            // depth(t) = t / norm, so t in [near, far] * norm covers the slab
            r.t_near = cam.near * norm;
            r.t_far = cam.far * norm;
            rays.push_back(r);
        }
    }
    return rays;
}

inline Ray camera_ray(const Camera& cam, int ix, int iy) {
    const double f = cam.focal_px();
    const double x = (double(ix) + 0.5 - cam.cx()) / f;
    const double y = (double(iy) + 0.5 - cam.cy()) / f;
    const Eigen::Vector3d dir_cam(x, y, 1.0);
    const double norm = dir_cam.norm();
    Ray r;
    r.origin = cam.position();
    r.direction = cam.rotation() * (dir_cam / norm);
    r.t_near = cam.near * norm;
    r.t_far = cam.far * norm;
    return r;
}

inline Projection project(const Eigen::Vector3d& point, const Camera& cam) {
    const Eigen::Vector3d p_cam =
        cam.rotation().transpose() * (point - cam.position());
    Projection p;
    p.depth = p_cam.z();
    if (p.depth <= 0.0) {
        p.behind = true;
        return p;
    }
    const double f = cam.focal_px();
    p.u = cam.cx() + f * p_cam.x() / p.depth;
    p.v = cam.cy() + f * p_cam.y() / p.depth;
    return p;
}

/// A posed image: pixel values in [-1, 1], shape 3 x H x W.
struct Frame {
    Tensor image;
    Camera camera;
};

/// Depth image of the three coordinate planes x=0, y=0, z=0. Per pixel:
/// the smallest positive intersection depth, clamped to [near, far]; pixels
/// whose ray hits no plane get the far value as sentinel. Single channel,
/// shape 1 x H x W.
inline Tensor coordinate_plane_depth(const Camera& cam) {
    cam.validate();
    const std::vector<Ray> rays = camera_rays(cam);
    const Eigen::Vector3d fwd = cam.forward();
    Tensor depth({1, uint32_t(cam.height), uint32_t(cam.width)});
    for (size_t i = 0; i < rays.size(); ++i) {
        const Ray& r = rays[i];
        const double dz = r.direction.dot(fwd);  // depth per unit t
        double best = std::numeric_limits<double>::infinity();
        for (int axis = 0; axis < 3; ++axis) {
            const double d = r.direction[axis];
            if (std::abs(d) < 1e-12) continue;  // parallel (or lying in) plane
            const double t = -r.origin[axis] / d;
            if (t > 0.0) best = std::min(best, t * dz);
        }
        if (!std::isfinite(best))
            best = cam.far;
        depth[i] = float(std::clamp(best, cam.near, cam.far));
    }
    return depth;
}

}  // namespace nvs
