// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nvs/camera.hpp"
#include "nvs/renderer.hpp"
#include "nvs/rng.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

/// Input-image noise augmentation: with probability p, add Gaussian noise
/// whose standard deviation is itself drawn uniformly from [0, 0.5] (the
/// image range being [-1, 1]). Records the branch and the drawn level.
struct AugmentResult {
    Tensor image;
    bool applied = false;
    double noise_std = 0.0;
};

inline AugmentResult augment_input_noise(const Tensor& image, RngStream& rng,
                                         double p = 0.5) {
    AugmentResult out;
    out.image = image;
    if (rng.uniform() >= p) return out;
    out.applied = true;
    out.noise_std = rng.uniform(0.0, 0.5);
    for (size_t i = 0; i < out.image.numel(); ++i)
        out.image[i] = float(double(out.image[i]) + out.noise_std * rng.normal());
    return out;
}

/// Conditioning dropout: with probability p the feature image payload is
/// replaced by standard Gaussian noise (its opacity map is zeroed). This is
/// how the unconditional branch is represented during training.
struct DropoutResult {
    FeatureImage feature;
    bool dropped = false;
};

inline DropoutResult conditioning_dropout(const FeatureImage& f, RngStream& rng,
                                          double p = 0.1) {
    DropoutResult out;
    out.feature = f;
    if (rng.uniform() >= p) return out;
    out.dropped = true;
    for (size_t i = 0; i < out.feature.data.numel(); ++i)
        out.feature.data[i] = float(rng.normal());
    out.feature.alpha = Tensor{out.feature.alpha.dims()};
    return out;
}

/// Standalone dropout-style substitute: a feature image filled with
/// standard Gaussian noise for the given view. Used as the "unconditional"
/// input of guided sampling runs.
inline FeatureImage noise_feature_image(const Camera& camera, int channels,
                                        RngStream& rng) {
    FeatureImage f;
    f.target_camera = camera;
    f.data = Tensor({uint32_t(channels), uint32_t(camera.height),
                     uint32_t(camera.width)});
    for (size_t i = 0; i < f.data.numel(); ++i) f.data[i] = float(rng.normal());
    f.alpha = Tensor({uint32_t(camera.height), uint32_t(camera.width)});
    return f;
}

}  // namespace nvs
