// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace nvs {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

/// Seeded random stream with named sub-stream derivation. All randomness in
/// the library flows from one root seed through child() calls, so two runs
/// with the same seed are bit-identical regardless of evaluation order, and
/// adding parallelism cannot reorder draws.
///
/// Floating-point draws are mapped from raw mt19937_64 output explicitly
/// (the standard leaves distribution algorithms implementation-defined).
class RngStream {
public:
    explicit RngStream(uint64_t seed)
        : seed_(seed), gen_(detail::splitmix64(seed)) {}

    uint64_t seed() const { return seed_; }

    /// Derive an independent stream from this stream's identity. Does not
    /// consume state; child(name, i) is the same stream no matter how much
    /// the parent has been used.
    RngStream child(std::string_view name, uint64_t index = 0) const {
        uint64_t s = detail::splitmix64(seed_ ^ detail::fnv1a64(name));
        s = detail::splitmix64(s ^ (0x632be59bd9b4e019ull * (index + 1)));
        return RngStream(s);
    }

    uint64_t child_seed(std::string_view name, uint64_t index = 0) const {
        return child(name, index).seed();
    }

    uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection sampled (no modulo bias).
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: empty range");
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace nvs
