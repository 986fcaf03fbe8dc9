// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nvs/camera.hpp"
#include "nvs/diffusion.hpp"
#include "nvs/field.hpp"
#include "nvs/renderer.hpp"
#include "nvs/rng.hpp"

namespace nvs {

struct FrameRef {
    enum class Kind { kInput, kGenerated };
    Kind kind = Kind::kInput;
    int index = 0;

    bool operator==(const FrameRef&) const = default;
};

enum class PolicyKind {
    kInputsOnly,
    kPreviousOnly,
    kBaseline,
    kLongRange,
    kTwoPass,
    kStochastic,
};

/// Conditioning-frame selection policy for sequence generation.
///   inputs_only   - always the input frames; immune to drift, flickers.
///   previous_only - inputs at step 0, then just the last generated frame.
///   baseline      - inputs + last generated + up to k_random draws from
///                   earlier generated frames.
///   long_range    - baseline, but draws come from the most recent `window`
///                   frames, plus every `stride`-th generated frame
///                   (anchored at index 0) for loop consistency.
///   two_pass      - baseline first pass, then each frame is regenerated
///                   conditioned on the nearest `two_pass_window` first-pass
///                   frames by trajectory index.
///   stochastic    - one conditioning frame redrawn per denoising step;
///                   needs a long schedule (stochastic_steps).
struct ConditioningPolicy {
    PolicyKind kind = PolicyKind::kBaseline;
    int k_random = 5;
    int window = 20;
    int stride = 15;
    int two_pass_window = 4;
    int stochastic_steps = 256;

    void validate() const {
        if (k_random < 1 || window < 1 || stride < 1 || two_pass_window < 1 ||
            stochastic_steps < 1)
            throw std::invalid_argument("ConditioningPolicy: parameters must be positive");
    }
};

struct SequenceState {
    std::vector<Frame> inputs;
    std::vector<Frame> generated;  // append-only

    int step() const { return int(generated.size()); }

    const Frame& frame(const FrameRef& ref) const {
        return ref.kind == FrameRef::Kind::kInput ? inputs.at(size_t(ref.index))
                                                  : generated.at(size_t(ref.index));
    }
};

namespace detail {

inline void push_unique(std::vector<FrameRef>& refs, const FrameRef& r) {
    if (std::find(refs.begin(), refs.end(), r) == refs.end()) refs.push_back(r);
}

/// k draws without replacement from `candidates`, in draw order.
inline std::vector<int> draw_without_replacement(std::vector<int> candidates, int k,
                                                 RngStream& rng) {
    std::vector<int> out;
    const int n = std::min<int>(k, int(candidates.size()));
    for (int i = 0; i < n; ++i) {
        const size_t j = size_t(rng.uniform_int(candidates.size()));
        out.push_back(candidates[j]);
        candidates.erase(candidates.begin() + long(j));
    }
    return out;
}

}  // namespace detail

/// Chooses the conditioning set for the next frame. Ordered and
/// deduplicated: inputs first, then the most recent generated frame, then
/// random draws, then long-range anchors. Never references a frame at or
/// beyond the current step. Deterministic given the stream.
inline std::vector<FrameRef> select_conditioning(const ConditioningPolicy& policy,
                                                 const SequenceState& state,
                                                 RngStream& rng) {
    policy.validate();
    if (state.inputs.empty())
        throw std::invalid_argument("select_conditioning: needs at least one input frame");
    const int step = state.step();

    std::vector<FrameRef> refs;
    auto add_inputs = [&] {
        for (int i = 0; i < int(state.inputs.size()); ++i)
            refs.push_back({FrameRef::Kind::kInput, i});
    };

    switch (policy.kind) {
        case PolicyKind::kInputsOnly:
            add_inputs();
            return refs;
        case PolicyKind::kPreviousOnly:
            if (step == 0)
                add_inputs();
            else
                refs.push_back({FrameRef::Kind::kGenerated, step - 1});
            return refs;
        case PolicyKind::kStochastic:
            // The per-step draw pool; actual draws happen inside the sampler.
            add_inputs();
            for (int i = 0; i < step; ++i)
                refs.push_back({FrameRef::Kind::kGenerated, i});
            return refs;
        case PolicyKind::kBaseline:
        case PolicyKind::kTwoPass:  // two-pass runs baseline selection in pass 1
        case PolicyKind::kLongRange:
            break;
    }

    add_inputs();
    if (step == 0) return refs;
    refs.push_back({FrameRef::Kind::kGenerated, step - 1});

    // Random draws exclude the most recent frame (already included).
    std::vector<int> candidates;
    const int lo = policy.kind == PolicyKind::kLongRange
                       ? std::max(0, step - policy.window)
                       : 0;
    for (int i = lo; i <= step - 2; ++i) candidates.push_back(i);
    for (int idx : detail::draw_without_replacement(std::move(candidates),
                                                    policy.k_random, rng))
        detail::push_unique(refs, {FrameRef::Kind::kGenerated, idx});

    if (policy.kind == PolicyKind::kLongRange)
        for (int i = 0; i <= step - 1; i += policy.stride)
            detail::push_unique(refs, {FrameRef::Kind::kGenerated, i});
    return refs;
}

/// Builds a feature volume from a conditioning frame; stands in for the
/// learned image encoder.
using Encoder = std::function<FeatureVolume(const Frame&)>;

/// Produces the denoiser for a given target view. Most denoisers ignore the
/// camera; the ground-truth oracle binds to it.
using DenoiserFactory = std::function<Denoiser(const Camera&)>;

struct Pipeline {
    Encoder encoder;
    DenoiserFactory denoiser_for;
    DecoderMlp mlp;
    AggregationMode aggregation = AggregationMode::kMean;
    RenderConfig render;  // rng_seed is overridden per frame
    NoiseSchedule schedule;
    GuidanceConfig guidance;
    bool one_step = false;
    bool one_step_deterministic = false;
    // When guidance needs an unconditional branch, this supplies the
    // substitute feature image (dropout-style noise); null disables it and
    // the denoiser sees a null conditioning pointer instead.
    std::function<FeatureImage(const Camera&, uint64_t seed)> uncond_feature;
};

struct SequenceResult {
    std::vector<Frame> frames;
    std::vector<std::vector<FrameRef>> conditioning;  // per generated frame
    // Populated only by the two-pass policy: the first-pass choices.
    std::vector<std::vector<FrameRef>> first_pass_conditioning;
    int feature_renders = 0;
    int passes = 1;
};

namespace detail {

struct FrameSample {
    Tensor image;
    FeatureImage feature;
};

inline FrameSample sample_frame(const Pipeline& pipeline, const Camera& target,
                                const std::vector<const Frame*>& cond_frames,
                                const RngStream& frame_rng) {
    std::vector<FeatureVolume> volumes;
    volumes.reserve(cond_frames.size());
    for (const Frame* f : cond_frames) volumes.push_back(pipeline.encoder(*f));

    FeatureField field{std::move(volumes), pipeline.mlp, pipeline.aggregation};
    RenderConfig cfg = pipeline.render;
    cfg.rng_seed = frame_rng.child_seed("render");
    FrameSample out{Tensor{}, render_feature_image(field, target, cfg)};

    FeatureImage uncond;
    Conditioning cc;
    cc.cond = &out.feature;
    if (pipeline.guidance.g != 0.0 && pipeline.uncond_feature) {
        uncond = pipeline.uncond_feature(target, frame_rng.child_seed("uncond"));
        cc.uncond = &uncond;
    }

    const std::vector<uint32_t> shape = {3, uint32_t(target.height),
                                         uint32_t(target.width)};
    RngStream sample_rng = frame_rng.child("sample");
    const Denoiser denoiser = pipeline.denoiser_for(target);
    if (pipeline.one_step) {
        out.image = one_step_inference(denoiser, cc.cond, pipeline.schedule.sigmas.at(0),
                                       sample_rng, pipeline.one_step_deterministic,
                                       shape);
    } else {
        out.image = heun_sample(denoiser, cc, pipeline.schedule, pipeline.guidance,
                                sample_rng, shape);
    }
    return out;
}

}  // namespace detail

/// One full Heun run for a single target view where the conditioning frame
/// is redrawn uniformly from all available frames before every denoising
/// step (both sub-evaluations of a step share the draw). The feature image
/// is re-rendered from the single drawn frame each step.
inline Tensor stochastic_conditioning_sample(const Pipeline& pipeline,
                                             const Camera& target,
                                             const SequenceState& state, int steps,
                                             const RngStream& rng) {
    if (state.inputs.empty() && state.generated.empty())
        throw std::invalid_argument(
            "stochastic_conditioning_sample: no conditioning frames");
    if (steps < 1)
        throw std::invalid_argument("stochastic_conditioning_sample: steps must be >= 1");

    std::vector<const Frame*> pool;
    for (const auto& f : state.inputs) pool.push_back(&f);
    for (const auto& f : state.generated) pool.push_back(&f);

    const NoiseSchedule schedule =
        build_schedule(steps, pipeline.schedule.sigma_max, pipeline.schedule.sigma_min,
                       pipeline.schedule.rho);
    RngStream draw_rng = rng.child("draw");
    RngStream sample_rng = rng.child("sample");
    const uint64_t render_seed = rng.child_seed("render");

    auto holder = std::make_shared<FeatureImage>();
    auto step_conditioning = [&, holder](int) {
        const Frame* f = pool[size_t(draw_rng.uniform_int(pool.size()))];
        FeatureField field{{pipeline.encoder(*f)}, pipeline.mlp, pipeline.aggregation};
        RenderConfig cfg = pipeline.render;
        cfg.rng_seed = render_seed;
        *holder = render_feature_image(field, target, cfg);
        return Conditioning{holder.get(), nullptr};
    };

    const std::vector<uint32_t> shape = {3, uint32_t(target.height),
                                         uint32_t(target.width)};
    const Denoiser denoiser = pipeline.denoiser_for(target);
    return heun_sample_with(denoiser, schedule, pipeline.guidance, sample_rng, shape,
                            step_conditioning);
}

/// Autoregressive trajectory generation. For each target camera: select
/// conditioning frames, encode one feature volume per frame, render the
/// feature image once, and run the sampler reusing it across all denoising
/// steps. The result records the conditioning choices and counts feature
/// renders (exactly one per generated frame per pass).
inline SequenceResult generate_sequence(const Pipeline& pipeline,
                                        const std::vector<Camera>& trajectory,
                                        const std::vector<Frame>& input_frames,
                                        const ConditioningPolicy& policy,
                                        const RngStream& rng) {
    policy.validate();
    if (input_frames.empty())
        throw std::invalid_argument("generate_sequence: needs at least one input frame");
    if (trajectory.empty())
        throw std::invalid_argument("generate_sequence: empty trajectory");

    SequenceResult result;
    SequenceState state;
    state.inputs = input_frames;

    for (size_t t = 0; t < trajectory.size(); ++t) {
        const Camera& target = trajectory[t];
        const RngStream frame_rng = rng.child("frame", t);
        try {
            if (policy.kind == PolicyKind::kStochastic) {
                RngStream select_rng = frame_rng.child("select");
                result.conditioning.push_back(
                    select_conditioning(policy, state, select_rng));
                Tensor image = stochastic_conditioning_sample(
                    pipeline, target, state, policy.stochastic_steps, frame_rng);
                // Every denoising step re-renders the feature image.
                result.feature_renders += policy.stochastic_steps;
                state.generated.push_back({std::move(image), target});
                continue;
            }

            RngStream select_rng = frame_rng.child("select");
            std::vector<FrameRef> refs = select_conditioning(policy, state, select_rng);
            std::vector<const Frame*> cond;
            cond.reserve(refs.size());
            for (const auto& r : refs) cond.push_back(&state.frame(r));
            detail::FrameSample sample =
                detail::sample_frame(pipeline, target, cond, frame_rng);
            ++result.feature_renders;
            result.conditioning.push_back(std::move(refs));
            state.generated.push_back({std::move(sample.image), target});
        } catch (const std::exception& e) {
            throw std::runtime_error("generate_sequence: frame " + std::to_string(t) +
                                     ": " + e.what());
        }
    }

    if (policy.kind != PolicyKind::kTwoPass) {
        result.frames = std::move(state.generated);
        return result;
    }

    // Second pass: regenerate each frame conditioned on the nearest
    // first-pass frames by trajectory index (the same index counts as
    // nearest; ties prefer the earlier frame).
    result.passes = 2;
    result.first_pass_conditioning = std::move(result.conditioning);
    result.conditioning.clear();
    const std::vector<Frame>& first_pass = state.generated;
    for (size_t t = 0; t < trajectory.size(); ++t) {
        const RngStream frame_rng = rng.child("frame2", t);
        try {
            std::vector<int> order(first_pass.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
            std::stable_sort(order.begin(), order.end(), [t](int a, int b) {
                return std::abs(a - int(t)) < std::abs(b - int(t));
            });
            const int k = std::min<int>(policy.two_pass_window, int(order.size()));
            std::vector<FrameRef> refs;
            std::vector<const Frame*> cond;
            for (int i = 0; i < k; ++i) {
                refs.push_back({FrameRef::Kind::kGenerated, order[size_t(i)]});
                cond.push_back(&first_pass[size_t(order[size_t(i)])]);
            }
            detail::FrameSample sample =
                detail::sample_frame(pipeline, trajectory[t], cond, frame_rng);
            ++result.feature_renders;
            result.conditioning.push_back(std::move(refs));
            result.frames.push_back({std::move(sample.image), trajectory[t]});
        } catch (const std::exception& e) {
            throw std::runtime_error("generate_sequence: second pass frame " +
                                     std::to_string(t) + ": " + e.what());
        }
    }
    return result;
}

}  // namespace nvs
