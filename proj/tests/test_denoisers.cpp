// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "nvs/denoisers.hpp"
#include "nvs/rng.hpp"

using namespace nvs;

namespace {

Tensor scalar(float v) {
    Tensor t({1});
    t[0] = v;
    return t;
}

Tensor random_image(uint64_t seed, uint32_t c = 3, uint32_t h = 4, uint32_t w = 4) {
    Tensor t({c, h, w});
    RngStream rng(seed);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(-1.0, 1.0));
    return t;
}

}  // namespace

TEST_CASE("gaussian oracle returns y at sigma zero") {
    GaussianOracle oracle{random_image(1), 0.3};
    const Tensor y = random_image(2);
    REQUIRE(bitwise_equal(gaussian_oracle_denoise(oracle, y, 0.0), y));
}

TEST_CASE("gaussian oracle shrinks to the mean at large sigma") {
    GaussianOracle oracle{random_image(3), 0.5};
    const Tensor y = random_image(4);
    const Tensor out = gaussian_oracle_denoise(oracle, y, 1e6);
    const double bound = 0.25 / 1e12 * (max_abs_diff(y, oracle.mu) + 1e-30);
    for (size_t i = 0; i < y.numel(); ++i)
        REQUIRE(std::abs(double(out[i]) - double(oracle.mu[i])) <= bound + 1e-12);
}

TEST_CASE("gaussian oracle closed form at s = sigma = 1") {
    GaussianOracle oracle{scalar(0.0f), 1.0};
    const Tensor out = gaussian_oracle_denoise(oracle, scalar(2.0f), 1.0);
    REQUIRE(out[0] == Catch::Approx(1.0));
}

TEST_CASE("gaussian oracle validates inputs") {
    REQUIRE_THROWS_AS(gaussian_oracle_denoise({scalar(0.0f), 0.0}, scalar(1.0f), 1.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(gaussian_oracle_denoise({scalar(0.0f), 1.0}, random_image(9), 1.0),
                      std::invalid_argument);
}

TEST_CASE("single-component mixture equals the gaussian oracle bit-exactly") {
    const Tensor mu = random_image(5);
    MixtureOracle mix{{{mu, 0.4, 1.0}}};
    GaussianOracle gauss{mu, 0.4};
    const Tensor y = random_image(6);
    for (double sigma : {0.0, 0.1, 1.0, 50.0}) {
        REQUIRE(bitwise_equal(mixture_oracle_denoise(mix, y, sigma),
                              gaussian_oracle_denoise(gauss, y, sigma)));
    }
}

TEST_CASE("symmetric two-mode mixture denoises zero to zero") {
    MixtureOracle mix{{{scalar(0.6f), 0.05, 0.5}, {scalar(-0.6f), 0.05, 0.5}}};
    for (double sigma : {0.01, 0.5, 3.0, 80.0}) {
        const Tensor out = mixture_oracle_denoise(mix, scalar(0.0f), sigma);
        REQUIRE(std::abs(out[0]) < 1e-12);
    }
}

TEST_CASE("mixture responsibilities sum to one") {
    MixtureOracle mix{{{scalar(0.2f), 0.1, 0.25},
                       {scalar(-0.4f), 0.3, 0.35},
                       {scalar(0.9f), 0.2, 0.4}}};
    RngStream rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> r =
            mixture_responsibilities(mix, rng.uniform(-2.0, 2.0), rng.uniform(0.0, 5.0));
        double total = 0.0;
        for (double v : r) {
            REQUIRE(v >= 0.0);
            total += v;
        }
        REQUIRE(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("mixture tends to the global mean at huge sigma") {
    MixtureOracle mix{{{scalar(0.8f), 0.1, 0.3}, {scalar(-0.2f), 0.2, 0.7}}};
    const double global_mean = 0.3 * 0.8 + 0.7 * -0.2;
    const Tensor out = mixture_oracle_denoise(mix, scalar(1.3f), 1e6);
    REQUIRE(std::abs(out[0] - global_mean) < 1e-4);
}

TEST_CASE("gaussian oracle is shrink-Lipschitz in y") {
    GaussianOracle oracle{random_image(8), 0.3};
    RngStream rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const double sigma = rng.uniform(0.0, 3.0);
        const double shrink = 0.09 / (0.09 + sigma * sigma);
        Tensor y = random_image(100 + uint64_t(trial));
        Tensor y2 = y;
        const size_t idx = rng.uniform_int(y.numel());
        const double delta = 1e-3;
        y2[idx] = float(double(y2[idx]) + delta);
        const Tensor a = gaussian_oracle_denoise(oracle, y, sigma);
        const Tensor b = gaussian_oracle_denoise(oracle, y2, sigma);
        const double df = std::abs(double(b[idx]) - double(a[idx]));
        REQUIRE(df <= delta * shrink * (1.0 + 1e-6) + 1e-7);
        REQUIRE(df <= delta * (1.0 + 1e-6) + 1e-7);
    }
}

TEST_CASE("mixture oracle obeys the shrink bound away from decision boundaries") {
    // The posterior-mean slope of a mixture exceeds the per-component shrink
    // only where responsibilities shift (near decision boundaries). Probe at
    // the component means, where responsibilities are saturated.
    MixtureOracle mix{{{scalar(0.7f), 0.05, 0.5}, {scalar(-0.7f), 0.05, 0.5}}};
    for (double sigma : {0.01, 0.05, 0.1}) {
        const double shrink = 0.0025 / (0.0025 + sigma * sigma);
        const double delta = 1e-4;
        const Tensor a = mixture_oracle_denoise(mix, scalar(0.7f), sigma);
        const Tensor b = mixture_oracle_denoise(mix, scalar(0.7f + float(delta)), sigma);
        const double df = std::abs(double(b[0]) - double(a[0]));
        REQUIRE(df <= delta * std::max(shrink, 1.0) + 1e-9);
    }
}

TEST_CASE("ideal scene denoiser ignores y and sigma and matches ground truth") {
    const ToyScene scene = demo_scene();
    const Camera cam = orbit_camera(2.0, 12.0, 6.0, {0, 0, 0}, 45.0, 8, 8, 1.2, 2.8);
    IdealSceneDenoiser ideal(scene, 512);
    const Denoiser den = ideal.for_camera(cam);

    const Tensor a = den(random_image(11, 3, 8, 8), nullptr, 0.5);
    const Tensor b = den(random_image(12, 3, 8, 8), nullptr, 77.0);
    REQUIRE(bitwise_equal(a, b));
    REQUIRE(bitwise_equal(a, render_ground_truth(scene, cam, 512).image));
}

TEST_CASE("ideal scene denoiser is a fixed point of one Heun step") {
    const ToyScene scene = demo_scene();
    const Camera cam = orbit_camera(2.0, -25.0, 0.0, {0, 0, 0}, 45.0, 8, 8, 1.2, 2.8);
    IdealSceneDenoiser ideal(scene, 512);
    const Denoiser den = ideal.for_camera(cam);
    const Tensor x_star = den(Tensor({3, 8, 8}), nullptr, 1.0);

    for (double sigma : {80.0, 1.0, 0.002}) {
        const double sigma_next = 0.5 * sigma;
        Tensor y = x_star;
        const Tensor d1 = den(y, nullptr, sigma);
        Tensor y_euler = y;
        for (size_t p = 0; p < y.numel(); ++p) {
            const double d = (double(y[p]) - double(d1[p])) / sigma;
            y_euler[p] = float(double(y[p]) + (sigma_next - sigma) * d);
        }
        const Tensor d2 = den(y_euler, nullptr, sigma_next);
        for (size_t p = 0; p < y.numel(); ++p) {
            const double da = (double(y[p]) - double(d1[p])) / sigma;
            const double db = (double(y_euler[p]) - double(d2[p])) / sigma_next;
            const double next =
                double(y[p]) + (sigma_next - sigma) * 0.5 * (da + db);
            REQUIRE(std::abs(next - double(x_star[p])) < 1e-9);
        }
    }
}

TEST_CASE("feature readout blends conditioning with the noisy input") {
    FeatureImage f;
    f.data = Tensor({4, 4, 4});
    for (size_t i = 0; i < f.data.numel(); ++i) f.data[i] = float(0.01 * double(i));
    f.alpha = Tensor({4, 4});
    const Tensor y = random_image(13, 3, 4, 4);

    // sigma -> infinity: pure readout of the first three channels.
    const Tensor far = feature_readout_denoise(y, f, 1e9);
    for (size_t i = 0; i < far.numel(); ++i)
        REQUIRE(far[i] == Catch::Approx(f.data[i]).margin(1e-6));

    // sigma = 0: returns y.
    const Tensor zero = feature_readout_denoise(y, f, 0.0);
    REQUIRE(bitwise_equal(zero, y));
}

TEST_CASE("feature readout requires conditioning") {
    const Denoiser den = make_feature_readout_denoiser();
    REQUIRE_THROWS_WITH(den(random_image(14), nullptr, 1.0),
                        Catch::Matchers::ContainsSubstring("unconditional call"));
}
