// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nvs/camera.hpp"
#include "nvs/rng.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus on (0, inf).
inline double softplus_inverse(double y) {
    return y + std::log(-std::expm1(-y));
}

/// Latent feature grid spanning the source camera frustum. Layout is
/// channels x depth-slices x rows x cols; rows/cols match the source image
/// resolution and depth slices are uniform in metric depth over [near, far].
/// Grid nodes sit at bin centers: voxel (k, i, j) is at pixel
/// (j + 0.5, i + 0.5) and depth near + (k + 0.5) * (far - near) / d.
struct FeatureVolume {
    Tensor data;  // c x d x h x w
    Camera source_camera;

    int channels() const { return int(data.dim(0)); }
    int depth_slices() const { return int(data.dim(1)); }
    int rows() const { return int(data.dim(2)); }
    int cols() const { return int(data.dim(3)); }

    double slice_depth(int k) const {
        const double step = (source_camera.far - source_camera.near) / depth_slices();
        return source_camera.near + (double(k) + 0.5) * step;
    }

    /// World position of the voxel center (k, i, j).
    Eigen::Vector3d voxel_center(int k, int i, int j) const {
        const Camera& cam = source_camera;
        const double f = cam.focal_px();
        const double z = slice_depth(k);
        const double x = (double(j) + 0.5 - cam.cx()) / f * z;
        const double y = (double(i) + 0.5 - cam.cy()) / f * z;
        return cam.rotation() * Eigen::Vector3d(x, y, z) + cam.position();
    }

    void validate() const {
        if (data.rank() != 4)
            throw std::invalid_argument("FeatureVolume: data must be rank 4");
        if (!data.all_finite())
            throw std::invalid_argument("FeatureVolume: non-finite values");
        source_camera.validate();
    }
};

enum class AggregationMode {
    kMean,
    kMax,
    // Uses one extra volume channel (the last) as a per-volume logit; the
    // aggregated feature is the softmax-weighted sum of the other channels.
    kSoftmaxWeighted,
};

/// Trilinear sample of the volume at a world point. Points outside the
/// frustum (behind the camera, outside the image, or with depth outside
/// [near, far]) return the zero vector. In-range coordinates clamp to the
/// edge nodes; coordinates within 1e-9 of a node snap to it so voxel
/// centers reproduce the stored value exactly.
inline Eigen::VectorXd sample_volume(const FeatureVolume& vol,
                                     const Eigen::Vector3d& point) {
    const int c = vol.channels();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(c);

    const Camera& cam = vol.source_camera;
    const Projection p = project(point, cam);
    if (p.behind) return out;
    if (p.u < 0.0 || p.u > double(cam.width)) return out;
    if (p.v < 0.0 || p.v > double(cam.height)) return out;
    if (p.depth < cam.near || p.depth > cam.far) return out;

    const int d = vol.depth_slices();
    const int h = vol.rows();
    const int w = vol.cols();

    auto grid_coord = [](double raw, int n) {
        double g = raw;
        const double r = std::round(g);
        if (std::abs(g - r) < 1e-9) g = r;
        return std::clamp(g, 0.0, double(n - 1));
    };

    const double gx = grid_coord(p.u * double(w) / double(cam.width) - 0.5, w);
    const double gy = grid_coord(p.v * double(h) / double(cam.height) - 0.5, h);
    const double gz = grid_coord(
        (p.depth - cam.near) / (cam.far - cam.near) * double(d) - 0.5, d);

    const int x0 = int(std::floor(gx)), x1 = std::min(x0 + 1, w - 1);
    const int y0 = int(std::floor(gy)), y1 = std::min(y0 + 1, h - 1);
    const int z0 = int(std::floor(gz)), z1 = std::min(z0 + 1, d - 1);
    const double fx = gx - double(x0);
    const double fy = gy - double(y0);
    const double fz = gz - double(z0);

    auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
    for (int ch = 0; ch < c; ++ch) {
        const double v000 = vol.data.at(ch, z0, y0, x0);
        const double v001 = vol.data.at(ch, z0, y0, x1);
        const double v010 = vol.data.at(ch, z0, y1, x0);
        const double v011 = vol.data.at(ch, z0, y1, x1);
        const double v100 = vol.data.at(ch, z1, y0, x0);
        const double v101 = vol.data.at(ch, z1, y0, x1);
        const double v110 = vol.data.at(ch, z1, y1, x0);
        const double v111 = vol.data.at(ch, z1, y1, x1);
        const double front = lerp(lerp(v000, v001, fx), lerp(v010, v011, fx), fy);
        const double back = lerp(lerp(v100, v101, fx), lerp(v110, v111, fx), fy);
        out[ch] = lerp(front, back, fz);
    }
    return out;
}

/// Multi-view aggregation of per-volume samples at one world point.
/// Summation is in list index order, so results are bit-reproducible.
/// In softmax mode every volume carries c+1 channels and the returned
/// feature has c entries.
inline Eigen::VectorXd aggregate(const std::vector<FeatureVolume>& volumes,
                                 const Eigen::Vector3d& point,
                                 AggregationMode mode) {
    if (volumes.empty())
        throw std::invalid_argument("aggregate: no conditioning views");
    const int stored = volumes.front().channels();
    for (const auto& v : volumes)
        if (v.channels() != stored)
            throw std::invalid_argument("aggregate: channel count mismatch");

    const size_t n = volumes.size();
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(n);
    for (const auto& v : volumes) samples.push_back(sample_volume(v, point));

    switch (mode) {
        case AggregationMode::kMean: {
            Eigen::VectorXd sum = samples[0];
            for (size_t j = 1; j < n; ++j) sum += samples[j];
            return sum / double(n);
        }
        case AggregationMode::kMax: {
            Eigen::VectorXd m = samples[0];
            for (size_t j = 1; j < n; ++j) m = m.cwiseMax(samples[j]);
            return m;
        }
        case AggregationMode::kSoftmaxWeighted: {
            if (stored < 2)
                throw std::invalid_argument(
                    "aggregate: softmax mode needs a logit channel");
            const int c = stored - 1;
            double max_logit = samples[0][c];
            for (size_t j = 1; j < n; ++j) max_logit = std::max(max_logit, samples[j][c]);
            double norm = 0.0;
            std::vector<double> weights(n);
            for (size_t j = 0; j < n; ++j) {
                weights[j] = std::exp(samples[j][c] - max_logit);
                norm += weights[j];
            }
            Eigen::VectorXd out = Eigen::VectorXd::Zero(c);
            for (size_t j = 0; j < n; ++j)
                out += (weights[j] / norm) * samples[j].head(c);
            return out;
        }
    }
    throw std::logic_error("aggregate: unknown mode");
}

/// Two-hidden-layer ReLU MLP decoding an aggregated feature into a density
/// and a feature vector. Shapes default to 16 -> 64 -> 64 -> 17; the output
/// is one density logit plus a residual that is added back onto the input
/// (input skip, always on).
struct DecoderMlp {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;

    int input_dim() const { return int(w1.cols()); }
    int output_dim() const { return int(w3.rows()); }

    void validate() const {
        if (w1.rows() != b1.size() || w2.rows() != b2.size() || w3.rows() != b3.size())
            throw std::invalid_argument("DecoderMlp: bias/weight shape mismatch");
        if (w2.cols() != w1.rows() || w3.cols() != w2.rows())
            throw std::invalid_argument("DecoderMlp: layer shape mismatch");
        if (output_dim() != input_dim() + 1)
            throw std::invalid_argument("DecoderMlp: output dim must be input dim + 1");
        if (!w1.allFinite() || !w2.allFinite() || !w3.allFinite() ||
            !b1.allFinite() || !b2.allFinite() || !b3.allFinite())
            throw std::invalid_argument("DecoderMlp: non-finite parameters");
    }

    static DecoderMlp zero(int c = 16, int hidden = 64) {
        DecoderMlp m;
        m.w1 = Eigen::MatrixXd::Zero(hidden, c);
        m.w2 = Eigen::MatrixXd::Zero(hidden, hidden);
        m.w3 = Eigen::MatrixXd::Zero(c + 1, hidden);
        m.b1 = Eigen::VectorXd::Zero(hidden);
        m.b2 = Eigen::VectorXd::Zero(hidden);
        m.b3 = Eigen::VectorXd::Zero(c + 1);
        return m;
    }

    static DecoderMlp random(uint64_t seed, int c = 16, int hidden = 64) {
        RngStream rng(seed);
        DecoderMlp m = zero(c, hidden);
        auto fill = [&rng](Eigen::MatrixXd& w) {
            const double scale = std::sqrt(2.0 / double(w.cols()));
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j)
                    w(i, j) = scale * rng.normal();
        };
        fill(m.w1);
        fill(m.w2);
        fill(m.w3);
        return m;
    }

    /// Fixed weights that make the decoder a pure readout of volume
    /// channels laid out as [density encoding, feature 0..c-2]:
    ///   tau        = softplus(w[0] - bias_shift)
    ///   feature[j] = w[j + 1]   for j < c - 1
    ///   feature[c-1] = 0
    /// The matching encoding stores softplus_inverse(tau) + bias_shift in
    /// channel 0. A zero input (out-of-frustum sample) decodes to
    /// tau = softplus(-bias_shift), i.e. numerically transparent.
    /// Realized exactly with ReLU pairs: h1 = [relu(w), relu(-w)].
    static DecoderMlp passthrough(int c = 16, int hidden = 64,
                                  double bias_shift = kDefaultBiasShift) {
        if (hidden < 2 * c)
            throw std::invalid_argument("DecoderMlp::passthrough: hidden < 2c");
        DecoderMlp m = zero(c, hidden);
        for (int j = 0; j < c; ++j) {
            m.w1(j, j) = 1.0;
            m.w1(c + j, j) = -1.0;
        }
        m.w2.setIdentity();
        auto add_term = [&](int row, int col, double coeff) {
            m.w3(row, col) += coeff;       // +w[col] part
            m.w3(row, c + col) -= coeff;   // -(-w[col]) part
        };
        add_term(0, 0, 1.0);  // raw[0] = w[0] - bias_shift
        m.b3(0) = -bias_shift;
        for (int j = 0; j + 1 < c; ++j) {
            add_term(1 + j, j + 1, 1.0);  // raw[1+j] = w[j+1] - w[j]
            add_term(1 + j, j, -1.0);
        }
        add_term(c, c - 1, -1.0);  // raw[c] = -w[c-1]
        return m;
    }

    // Out-of-frustum (zero) inputs decode to softplus(-12) ~ 6e-6 density.
    // Kept moderate so float32 volume storage of channel 0 stays accurate.
    static constexpr double kDefaultBiasShift = 12.0;
};

struct DecodedPoint {
    double tau = 0.0;            // nonnegative density
    Eigen::VectorXd feature;     // input_dim entries
};

namespace detail {

inline Eigen::VectorXd mlp_raw(const DecoderMlp& mlp, const Eigen::VectorXd& w) {
    const Eigen::VectorXd h1 = ((mlp.w1 * w + mlp.b1).array().max(0.0)).matrix();
    const Eigen::VectorXd h2 = ((mlp.w2 * h1 + mlp.b2).array().max(0.0)).matrix();
    return mlp.w3 * h2 + mlp.b3;
}

}  // namespace detail

/// raw = mlp(w); tau = softplus(raw[0]); feature = raw[1..] + w.
inline DecodedPoint decode(const DecoderMlp& mlp, const Eigen::VectorXd& w) {
    mlp.validate();
    if (w.size() != mlp.input_dim())
        throw std::invalid_argument("decode: input dimension mismatch");
    const Eigen::VectorXd raw = detail::mlp_raw(mlp, w);
    DecodedPoint out;
    out.tau = softplus(raw[0]);
    out.feature = raw.tail(mlp.input_dim()) + w;
    return out;
}

/// Analytic Jacobian of the raw (pre-skip, pre-softplus) output w.r.t. the
/// input, with ReLU subgradient 0 at kinks.
inline Eigen::MatrixXd decoder_jacobian(const DecoderMlp& mlp,
                                        const Eigen::VectorXd& w) {
    mlp.validate();
    if (w.size() != mlp.input_dim())
        throw std::invalid_argument("decoder_jacobian: input dimension mismatch");
    const Eigen::VectorXd a1 = mlp.w1 * w + mlp.b1;
    const Eigen::VectorXd h1 = (a1.array().max(0.0)).matrix();
    const Eigen::VectorXd a2 = mlp.w2 * h1 + mlp.b2;
    const Eigen::ArrayXd m1 = (a1.array() > 0.0).cast<double>();
    const Eigen::ArrayXd m2 = (a2.array() > 0.0).cast<double>();
    // J = w3 * D2 * w2 * D1 * w1
    const Eigen::MatrixXd j1 = m1.matrix().asDiagonal() * mlp.w1;
    const Eigen::MatrixXd j2 = m2.matrix().asDiagonal() * (mlp.w2 * j1);
    return mlp.w3 * j2;
}

/// Batched decode: columns of `ws` are input vectors. Returns densities and
/// features column-per-sample. Matrix products keep the renderer fast.
struct DecodedBatch {
    Eigen::ArrayXd taus;
    Eigen::MatrixXd features;  // input_dim x n
};

inline DecodedBatch decode_batch(const DecoderMlp& mlp, const Eigen::MatrixXd& ws) {
    const Eigen::MatrixXd h1 =
        ((mlp.w1 * ws).colwise() + mlp.b1).array().max(0.0).matrix();
    const Eigen::MatrixXd h2 =
        ((mlp.w2 * h1).colwise() + mlp.b2).array().max(0.0).matrix();
    const Eigen::MatrixXd raw = ((mlp.w3 * h2).colwise() + mlp.b3);
    DecodedBatch out;
    out.taus.resize(ws.cols());
    for (Eigen::Index i = 0; i < ws.cols(); ++i) out.taus[i] = softplus(raw(0, i));
    out.features = raw.bottomRows(mlp.input_dim()) + ws;
    return out;
}

/// A renderable latent field: aggregated feature volumes plus the decoder.
struct FeatureField {
    std::vector<FeatureVolume> volumes;
    DecoderMlp mlp;
    AggregationMode mode = AggregationMode::kMean;

    int feature_dim() const { return mlp.input_dim(); }

    DecodedPoint decode_at(const Eigen::Vector3d& point) const {
        return decode(mlp, aggregate(volumes, point, mode));
    }
};

}  // namespace nvs
