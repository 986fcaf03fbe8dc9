// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "nvs/field.hpp"
#include "nvs/rng.hpp"

using namespace nvs;

namespace {

Camera source_camera(int w = 8, int h = 8) {
    Camera cam;
    cam.pose.setIdentity();
    cam.fov_y_deg = 60.0;
    cam.width = w;
    cam.height = h;
    cam.near = 1.0;
    cam.far = 3.0;
    return cam;
}

FeatureVolume random_volume(uint64_t seed, int c = 4, int d = 4, int h = 8,
                            int w = 8) {
    FeatureVolume vol;
    vol.source_camera = source_camera(w, h);
    vol.data = Tensor({uint32_t(c), uint32_t(d), uint32_t(h), uint32_t(w)});
    RngStream rng(seed);
    for (size_t i = 0; i < vol.data.numel(); ++i)
        vol.data[i] = float(rng.uniform(-1.0, 1.0));
    return vol;
}

}  // namespace

TEST_CASE("sample at a voxel center returns the stored vector exactly") {
    FeatureVolume vol = random_volume(11);
    for (int k : {0, 1, 3}) {
        for (int i : {0, 4, 7}) {
            for (int j : {0, 3, 7}) {
                const Eigen::Vector3d p = vol.voxel_center(k, i, j);
                const Eigen::VectorXd got = sample_volume(vol, p);
                for (int ch = 0; ch < vol.channels(); ++ch)
                    REQUIRE(got[ch] == double(vol.data.at(ch, k, i, j)));
            }
        }
    }
}

TEST_CASE("sample behind the camera or outside the frustum is zero") {
    FeatureVolume vol = random_volume(12);
    REQUIRE(sample_volume(vol, {0.0, 0.0, -1.0}).isZero());
    REQUIRE(sample_volume(vol, {0.0, 0.0, 0.5}).isZero());   // closer than near
    REQUIRE(sample_volume(vol, {0.0, 0.0, 3.5}).isZero());   // beyond far
    REQUIRE(sample_volume(vol, {100.0, 0.0, 2.0}).isZero()); // off image
}

TEST_CASE("sample midway between depth-adjacent voxel centers is the mean") {
    FeatureVolume vol = random_volume(13);
    const Eigen::Vector3d a = vol.voxel_center(1, 3, 4);
    const Eigen::Vector3d b = vol.voxel_center(2, 3, 4);
    // Both centers project to the same pixel only for the centered column;
    // instead walk along the bore ray of that pixel: interpolate depth.
    const Camera& cam = vol.source_camera;
    const double z_mid = 0.5 * (vol.slice_depth(1) + vol.slice_depth(2));
    const Eigen::Vector3d p = a + (z_mid - vol.slice_depth(1)) /
                                      (vol.slice_depth(2) - vol.slice_depth(1)) *
                                      (b - a);
    (void)cam;
    const Eigen::VectorXd got = sample_volume(vol, p);
    for (int ch = 0; ch < vol.channels(); ++ch) {
        const double expect =
            0.5 * (double(vol.data.at(ch, 1, 3, 4)) + double(vol.data.at(ch, 2, 3, 4)));
        REQUIRE(got[ch] == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("sample_volume locality: only the enclosing cell matters") {
    FeatureVolume vol = random_volume(14);
    // A point strictly inside the cell spanned by slices 1-2, rows 2-3,
    // cols 4-5.
    const Eigen::Vector3d a = vol.voxel_center(1, 2, 4);
    const Eigen::Vector3d b = vol.voxel_center(2, 3, 5);
    const Eigen::Vector3d p = a + 0.3 * (b - a);
    const Eigen::VectorXd before = sample_volume(vol, p);

    FeatureVolume perturbed = vol;
    for (int k = 0; k < vol.depth_slices(); ++k)
        for (int i = 0; i < vol.rows(); ++i)
            for (int j = 0; j < vol.cols(); ++j) {
                const bool in_cell =
                    (k == 1 || k == 2) && (i == 2 || i == 3) && (j == 4 || j == 5);
                if (!in_cell)
                    for (int ch = 0; ch < vol.channels(); ++ch)
                        perturbed.data.at(size_t(ch), size_t(k), size_t(i),
                                          size_t(j)) += 100.0f;
            }
    const Eigen::VectorXd after = sample_volume(perturbed, p);
    REQUIRE((before - after).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("aggregate with one volume equals sample_volume bit-exactly") {
    FeatureVolume vol = random_volume(15);
    const Eigen::Vector3d p = vol.voxel_center(1, 1, 1) + Eigen::Vector3d(0.01, 0.0, 0.02);
    const Eigen::VectorXd single = sample_volume(vol, p);
    for (AggregationMode mode : {AggregationMode::kMean, AggregationMode::kMax}) {
        const Eigen::VectorXd agg = aggregate({vol}, p, mode);
        for (int ch = 0; ch < single.size(); ++ch) REQUIRE(agg[ch] == single[ch]);
    }
}

TEST_CASE("mean aggregation averages per channel") {
    FeatureVolume a = random_volume(16, 4);
    FeatureVolume b = a;
    for (size_t i = 0; i < a.data.numel(); ++i) b.data[i] = 1.0f - a.data[i];
    const Eigen::Vector3d p = a.voxel_center(2, 3, 3);
    const Eigen::VectorXd m = aggregate({a, b}, p, AggregationMode::kMean);
    for (int ch = 0; ch < 4; ++ch) REQUIRE(m[ch] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("softmax with equal logits reduces to the mean") {
    // Volumes share the camera so both samples are in-frustum; the logit
    // channel (last) is constant and equal across volumes.
    FeatureVolume a = random_volume(17, 5);
    FeatureVolume b = random_volume(18, 5);
    const size_t plane = a.data.numel() / 5;
    for (size_t i = 0; i < plane; ++i) {
        a.data[4 * plane + i] = 0.7f;
        b.data[4 * plane + i] = 0.7f;
    }
    const Eigen::Vector3d p = a.voxel_center(1, 4, 5);
    const Eigen::VectorXd soft = aggregate({a, b}, p, AggregationMode::kSoftmaxWeighted);
    const Eigen::VectorXd mean = aggregate({a, b}, p, AggregationMode::kMean);
    for (int ch = 0; ch < 4; ++ch)
        REQUIRE(soft[ch] == Catch::Approx(mean[ch]).margin(1e-7));
}

TEST_CASE("aggregation is permutation invariant") {
    std::vector<FeatureVolume> vols = {random_volume(21, 4), random_volume(22, 4),
                                       random_volume(23, 4)};
    std::vector<FeatureVolume> perm = {vols[2], vols[0], vols[1]};
    const Eigen::Vector3d p = vols[0].voxel_center(2, 2, 2);
    for (AggregationMode mode :
         {AggregationMode::kMean, AggregationMode::kMax}) {
        const Eigen::VectorXd x = aggregate(vols, p, mode);
        const Eigen::VectorXd y = aggregate(perm, p, mode);
        REQUIRE((x - y).lpNorm<Eigen::Infinity>() < 1e-7);
    }
}

TEST_CASE("aggregate rejects an empty volume list") {
    REQUIRE_THROWS_WITH(aggregate({}, Eigen::Vector3d::Zero(), AggregationMode::kMean),
                        Catch::Matchers::ContainsSubstring("no conditioning views"));
}

TEST_CASE("decode with all-zero weights is skip plus softplus(0)") {
    const DecoderMlp mlp = DecoderMlp::zero(16);
    Eigen::VectorXd w(16);
    RngStream rng(31);
    for (int i = 0; i < 16; ++i) w[i] = rng.uniform(-2.0, 2.0);
    const DecodedPoint p = decode(mlp, w);
    REQUIRE(p.tau == Catch::Approx(std::log(2.0)).epsilon(1e-15));
    for (int i = 0; i < 16; ++i) REQUIRE(p.feature[i] == w[i]);
}

TEST_CASE("large negative density logit is numerically transparent") {
    DecoderMlp mlp = DecoderMlp::zero(16);
    mlp.b3[0] = -40.0;
    const DecodedPoint p = decode(mlp, Eigen::VectorXd::Zero(16));
    REQUIRE(p.tau >= 0.0);
    REQUIRE(p.tau < 1e-17);
}

TEST_CASE("decode rejects non-finite parameters and wrong input dims") {
    DecoderMlp mlp = DecoderMlp::zero(16);
    REQUIRE_THROWS_AS(decode(mlp, Eigen::VectorXd::Zero(8)), std::invalid_argument);
    mlp.w2(3, 3) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(decode(mlp, Eigen::VectorXd::Zero(16)), std::invalid_argument);
}

TEST_CASE("tau is nonnegative for random decoders") {
    RngStream rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const DecoderMlp mlp = DecoderMlp::random(rng.next_u64());
        Eigen::VectorXd w(16);
        for (int i = 0; i < 16; ++i) w[i] = rng.normal();
        REQUIRE(decode(mlp, w).tau >= 0.0);
    }
}

TEST_CASE("skip correctness: feature minus input equals the raw tail") {
    RngStream rng(33);
    const DecoderMlp mlp = DecoderMlp::random(77);
    Eigen::VectorXd w(16);
    for (int i = 0; i < 16; ++i) w[i] = rng.normal();
    const DecodedPoint p = decode(mlp, w);
    const Eigen::VectorXd raw = nvs::detail::mlp_raw(mlp, w);
    for (int i = 0; i < 16; ++i)
        REQUIRE(p.feature[i] - w[i] == Catch::Approx(raw[i + 1]).margin(1e-12));
}

TEST_CASE("decode is continuous under small input perturbations") {
    const DecoderMlp mlp = DecoderMlp::random(101);
    RngStream rng(34);
    Eigen::VectorXd w(16);
    for (int i = 0; i < 16; ++i) w[i] = rng.normal();
    const Eigen::MatrixXd jac = decoder_jacobian(mlp, w);
    const double jac_norm = jac.cwiseAbs().rowwise().sum().maxCoeff();
    const DecodedPoint base = decode(mlp, w);
    for (int trial = 0; trial < 8; ++trial) {
        Eigen::VectorXd dw(16);
        for (int i = 0; i < 16; ++i) dw[i] = 1e-6 * rng.uniform(-1.0, 1.0);
        const DecodedPoint moved = decode(mlp, w + dw);
        const double df = (moved.feature - base.feature).lpNorm<Eigen::Infinity>();
        REQUIRE(df <= 10.0 * (jac_norm + 1.0) * 1e-6);
    }
}

TEST_CASE("decoder_jacobian of the zero decoder is zero") {
    const DecoderMlp mlp = DecoderMlp::zero(16);
    const Eigen::MatrixXd j = decoder_jacobian(mlp, Eigen::VectorXd::Ones(16));
    REQUIRE(j.rows() == 17);
    REQUIRE(j.cols() == 16);
    REQUIRE(j.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoder_jacobian matches finite differences off the kinks") {
    RngStream rng(35);
    int checked = 0;
    while (checked < 25) {
        const DecoderMlp mlp = DecoderMlp::random(rng.next_u64());
        Eigen::VectorXd w(16);
        for (int i = 0; i < 16; ++i) w[i] = rng.normal();
        // Stay clear of ReLU kinks so the function is locally linear.
        const Eigen::VectorXd a1 = mlp.w1 * w + mlp.b1;
        const Eigen::VectorXd h1 = a1.array().max(0.0).matrix();
        const Eigen::VectorXd a2 = mlp.w2 * h1 + mlp.b2;
        if (a1.cwiseAbs().minCoeff() < 1e-3 || a2.cwiseAbs().minCoeff() < 1e-3)
            continue;
        ++checked;

        const Eigen::MatrixXd jac = decoder_jacobian(mlp, w);
        const double h = 1e-4;
        for (int col : {0, 7, 15}) {
            Eigen::VectorXd wp = w, wm = w;
            wp[col] += h;
            wm[col] -= h;
            const Eigen::VectorXd fp = nvs::detail::mlp_raw(mlp, wp);
            const Eigen::VectorXd fm = nvs::detail::mlp_raw(mlp, wm);
            for (int row = 0; row < 17; ++row) {
                const double fd = (fp[row] - fm[row]) / (2.0 * h);
                const double an = jac(row, col);
                const double denom = std::max(std::abs(an), 1e-8);
                REQUIRE(std::abs(fd - an) / denom < 1e-4);
            }
        }
    }
}

TEST_CASE("linear decoder (biased into the active region) has a product jacobian") {
    // Large positive biases pin every ReLU to its linear branch near w = 0;
    // b2 dominates |w2 * h1| even with h1 ~ b1.
    DecoderMlp mlp = DecoderMlp::random(202);
    mlp.b1.setConstant(50.0);
    mlp.b2.setConstant(1000.0);
    Eigen::VectorXd w = 0.01 * Eigen::VectorXd::Ones(16);
    const Eigen::VectorXd a1 = mlp.w1 * w + mlp.b1;
    const Eigen::VectorXd a2 = mlp.w2 * a1.array().max(0.0).matrix() + mlp.b2;
    REQUIRE(a1.minCoeff() > 0.0);
    REQUIRE(a2.minCoeff() > 0.0);
    const Eigen::MatrixXd expected = mlp.w3 * mlp.w2 * mlp.w1;
    const Eigen::MatrixXd got = decoder_jacobian(mlp, w);
    REQUIRE((expected - got).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("passthrough decoder reproduces encoded density and features") {
    const DecoderMlp mlp = DecoderMlp::passthrough(16);
    RngStream rng(36);
    for (int trial = 0; trial < 50; ++trial) {
        const double tau = std::exp(rng.uniform(-6.0, 1.5));
        Eigen::VectorXd feature(15);
        for (int i = 0; i < 15; ++i) feature[i] = rng.uniform(-1.0, 1.0);
        Eigen::VectorXd w(16);
        w[0] = softplus_inverse(tau) + DecoderMlp::kDefaultBiasShift;
        w.tail(15) = feature;
        const DecodedPoint p = decode(mlp, w);
        REQUIRE(p.tau == Catch::Approx(tau).epsilon(1e-9));
        for (int i = 0; i < 15; ++i)
            REQUIRE(p.feature[i] == Catch::Approx(feature[i]).margin(1e-12));
        REQUIRE(p.feature[15] == Catch::Approx(0.0).margin(1e-12));
    }
    // Zero input (out-of-frustum) decodes to a numerically transparent tau.
    const DecodedPoint empty = decode(mlp, Eigen::VectorXd::Zero(16));
    REQUIRE(empty.tau < 1e-5);
    REQUIRE(empty.feature.isZero());
}

TEST_CASE("decode_batch matches scalar decode") {
    const DecoderMlp mlp = DecoderMlp::random(303);
    RngStream rng(37);
    Eigen::MatrixXd ws(16, 9);
    for (int j = 0; j < 9; ++j)
        for (int i = 0; i < 16; ++i) ws(i, j) = rng.normal();
    const DecodedBatch batch = decode_batch(mlp, ws);
    for (int j = 0; j < 9; ++j) {
        const DecodedPoint p = decode(mlp, ws.col(j));
        REQUIRE(batch.taus[j] == Catch::Approx(p.tau).margin(1e-12));
        REQUIRE((batch.features.col(j) - p.feature).lpNorm<Eigen::Infinity>() < 1e-9);
    }
}
