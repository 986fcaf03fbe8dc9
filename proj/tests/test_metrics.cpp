// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "nvs/metrics.hpp"
#include "nvs/rng.hpp"

using namespace nvs;

namespace {

Tensor random_image(uint64_t seed, uint32_t c = 3, uint32_t h = 16, uint32_t w = 16) {
    Tensor t({c, h, w});
    RngStream rng(seed);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(-1.0, 1.0));
    return t;
}

}  // namespace

TEST_CASE("psnr caps at 120 for identical images") {
    const Tensor a = random_image(1);
    REQUIRE(psnr(a, a) == 120.0);
}

TEST_CASE("psnr closed form for a constant offset") {
    const Tensor a = random_image(2);
    Tensor b = a;
    for (size_t i = 0; i < b.numel(); ++i) b[i] += 0.2f;
    REQUIRE(psnr(a, b, 2.0) == Catch::Approx(20.0).margin(1e-4));
}

TEST_CASE("psnr rejects shape mismatch") {
    REQUIRE_THROWS_AS(psnr(Tensor({2}), Tensor({3})), std::invalid_argument);
}

TEST_CASE("ssim of identical images is one") {
    const Tensor a = random_image(3);
    REQUIRE(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ssim is symmetric and degrades with noise") {
    const Tensor a = random_image(4, 3, 24, 24);
    Tensor b = a;
    RngStream rng(5);
    for (size_t i = 0; i < b.numel(); ++i)
        b[i] = float(double(b[i]) + 0.3 * rng.normal());
    const double ab = ssim(a, b);
    const double ba = ssim(b, a);
    REQUIRE(std::abs(ab - ba) < 1e-9);
    REQUIRE(ab < 0.95);
    REQUIRE(ab > -1.0);

    Tensor c = a;
    for (size_t i = 0; i < c.numel(); ++i)
        c[i] = float(double(c[i]) + 0.01 * rng.normal());
    REQUIRE(ssim(a, c) > ab);
}

TEST_CASE("ssim needs images at least as large as its window") {
    REQUIRE_THROWS_AS(ssim(Tensor({1, 8, 8}), Tensor({1, 8, 8})),
                      std::invalid_argument);
}

TEST_CASE("pixel std map of identical samples is zero") {
    const Tensor a = random_image(6);
    const Tensor map = pixel_std_map({a, a, a});
    for (size_t i = 0; i < map.numel(); ++i) REQUIRE(map[i] == 0.0f);
}

TEST_CASE("pixel std map two-point closed form") {
    const Tensor a = random_image(7, 2, 4, 4);
    Tensor b = a;
    const float c = 0.35f;
    for (size_t i = 0; i < b.numel(); ++i) b[i] += 2.0f * c;
    const Tensor map = pixel_std_map({a, b});
    for (size_t i = 0; i < map.numel(); ++i)
        REQUIRE(map[i] == Catch::Approx(std::sqrt(2.0) * c).epsilon(1e-5));
}

TEST_CASE("pixel std map requires two samples and equal shapes") {
    REQUIRE_THROWS_AS(pixel_std_map({random_image(8)}), std::invalid_argument);
    REQUIRE_THROWS_AS(pixel_std_map({random_image(8), random_image(8, 3, 8, 8)}),
                      std::invalid_argument);
}

TEST_CASE("variance_vs_distance recovers a monotone profile") {
    // Construct groups whose per-pixel variance grows with distance.
    RngStream rng(9);
    std::vector<std::pair<double, std::vector<Tensor>>> groups;
    for (int g = 0; g < 16; ++g) {
        const double distance = 5.0 * double(g) / 15.0;
        const double level = 0.05 + 0.1 * distance;
        std::vector<Tensor> samples;
        for (int k = 0; k < 12; ++k) {
            Tensor t({1, 4, 4});
            for (size_t i = 0; i < t.numel(); ++i)
                t[i] = float(level * rng.normal());
            samples.push_back(std::move(t));
        }
        groups.emplace_back(distance, std::move(samples));
    }
    const DistanceVariance dv = variance_vs_distance(groups, 4, 3);
    REQUIRE(dv.bin_means.size() == 4);
    for (int b = 0; b + 1 < 4; ++b) {
        REQUIRE(dv.bin_counts[size_t(b)] > 0);
        REQUIRE(dv.bin_means[size_t(b)] < dv.bin_means[size_t(b) + 1]);
    }
    // The moving average smooths but keeps the trend.
    REQUIRE(dv.moving_average.front() < dv.moving_average.back());
    for (double s : dv.bin_stds) REQUIRE(s >= 0.0);
}

TEST_CASE("variance_vs_distance rejects tiny groups") {
    std::vector<std::pair<double, std::vector<Tensor>>> groups;
    groups.emplace_back(0.0, std::vector<Tensor>{random_image(10)});
    REQUIRE_THROWS_AS(variance_vs_distance(groups), std::invalid_argument);
}
