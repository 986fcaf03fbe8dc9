// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nvs/augment.hpp"
#include "nvs/autoregressive.hpp"
#include "nvs/denoisers.hpp"
#include "nvs/diffusion.hpp"
#include "nvs/io.hpp"
#include "nvs/metrics.hpp"
#include "nvs/scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nvs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Shared pipeline options (sample + sequence).

struct PipelineOpts {
    std::string scene_path;
    std::string inputs_path;
    std::string traj_path;
    std::string denoiser = "feature-readout";
    std::string aggregation = "mean";
    int steps = 25;
    bool steps_set = false;
    double sigma_max = 80.0;
    double sigma_min = 0.002;
    double rho = 7.0;
    double guidance = 0.0;
    uint64_t seed = 0;
    int resolution = 64;
    int depth_samples = 64;
    int volume_depth = 64;
    bool full_res = false;
    bool midpoint = false;
    bool one_step = false;
    bool deterministic = false;
    bool unconditional = false;
    double s0 = 0.5;
    int fine_samples = 2048;
};

void add_pipeline_opts(CLI::App* cmd, PipelineOpts& o) {
    cmd->add_option("--scene", o.scene_path, "Toy scene JSON")->required();
    cmd->add_option("--inputs", o.inputs_path, "Input-view manifest JSON")->required();
    cmd->add_option("--trajectory", o.traj_path, "Target-view manifest JSON")
        ->required();
    cmd->add_option("--denoiser", o.denoiser, "ideal-scene | feature-readout")
        ->check(CLI::IsMember({"ideal-scene", "feature-readout"}));
    cmd->add_option("--agg", o.aggregation, "mean | max")
        ->check(CLI::IsMember({"mean", "max"}));
    cmd->add_option("--steps", o.steps, "Denoising steps");
    cmd->add_option("--sigma-max", o.sigma_max, "Schedule sigma_max");
    cmd->add_option("--sigma-min", o.sigma_min, "Schedule sigma_min");
    cmd->add_option("--rho", o.rho, "Schedule spacing exponent");
    cmd->add_option("--guidance", o.guidance,
                    "Guidance strength (0 conditional, -1 unconditional)");
    cmd->add_option("--seed", o.seed, "Root RNG seed");
    cmd->add_option("--resolution", o.resolution, "Output image resolution");
    cmd->add_option("--depth-samples", o.depth_samples, "Depth samples per ray");
    cmd->add_option("--volume-depth", o.volume_depth, "Feature volume depth slices");
    cmd->add_flag("--full-res", o.full_res, "Disable half-resolution rendering");
    cmd->add_flag("--midpoint", o.midpoint, "Midpoint instead of stratified depths");
    cmd->add_flag("--one-step", o.one_step, "Single-denoise inference");
    cmd->add_flag("--deterministic", o.deterministic,
                  "Zero-noise start for one-step inference");
    cmd->add_flag("--unconditional", o.unconditional,
                  "Replace the feature image with dropout-style noise");
    cmd->add_option("--s0", o.s0, "feature-readout blend scale");
    cmd->add_option("--fine-samples", o.fine_samples,
                    "Ground-truth quadrature samples for metrics");
}

json pipeline_opts_json(const PipelineOpts& o, int frame,
                        const std::string& out_path, const std::string& stats_path,
                        const std::string& policy = "", int k_random = 5,
                        int window = 20, int stride = 15, int two_pass_window = 4) {
    json j;
    j["scene"] = o.scene_path;
    j["inputs"] = o.inputs_path;
    j["trajectory"] = o.traj_path;
    j["denoiser"] = o.denoiser;
    j["agg"] = o.aggregation;
    j["steps"] = o.steps;
    j["sigma-max"] = o.sigma_max;
    j["sigma-min"] = o.sigma_min;
    j["rho"] = o.rho;
    j["guidance"] = o.guidance;
    j["seed"] = o.seed;
    j["resolution"] = o.resolution;
    j["depth-samples"] = o.depth_samples;
    j["volume-depth"] = o.volume_depth;
    if (o.full_res) j["full-res"] = true;
    if (o.midpoint) j["midpoint"] = true;
    if (o.one_step) j["one-step"] = true;
    if (o.deterministic) j["deterministic"] = true;
    if (o.unconditional) j["unconditional"] = true;
    j["s0"] = o.s0;
    j["fine-samples"] = o.fine_samples;
    if (frame >= 0) j["frame"] = frame;
    if (!out_path.empty()) j["out"] = out_path;
    if (!stats_path.empty()) j["stats"] = stats_path;
    if (!policy.empty()) {
        j["policy"] = policy;
        j["k-random"] = k_random;
        j["window"] = window;
        j["stride"] = stride;
        j["two-pass-window"] = two_pass_window;
    }
    return j;
}

/// Loads the frames of an input manifest. Frames with image paths load their
/// pixels; pose-only frames get a blank image at the requested resolution
/// (the synthetic encoder consumes only the pose).
std::vector<Frame> load_input_frames(const SceneManifest& manifest, int resolution) {
    std::vector<Frame> frames;
    for (size_t i = 0; i < manifest.frames.size(); ++i) {
        if (!manifest.frames[i].image_path.empty() &&
            fs::exists(manifest.base_dir / manifest.frames[i].image_path)) {
            frames.push_back(load_frame(manifest, i));
        } else {
            Frame f;
            f.camera = manifest.camera(i, resolution, resolution);
            f.camera.validate();
            f.image = Tensor({3, uint32_t(resolution), uint32_t(resolution)});
            frames.push_back(std::move(f));
        }
    }
    return frames;
}

struct BuiltPipeline {
    Pipeline pipeline;
    ToyScene scene;
    std::shared_ptr<IdealSceneDenoiser> ideal;  // keeps the cache alive
};

BuiltPipeline build_pipeline(const PipelineOpts& o) {
    BuiltPipeline built;
    built.scene = load_scene(o.scene_path);
    const ToyScene& scene = built.scene;

    Pipeline& p = built.pipeline;
    const int channels = scene.feature_channels;
    const int volume_depth = o.volume_depth;
    p.encoder = [scene, channels, volume_depth](const Frame& f) {
        return synthetic_encode(scene, f.camera, channels, volume_depth);
    };
    if (o.denoiser == "ideal-scene") {
        built.ideal = std::make_shared<IdealSceneDenoiser>(scene, o.fine_samples);
        auto ideal = built.ideal;
        p.denoiser_for = [ideal](const Camera& cam) { return ideal->for_camera(cam); };
    } else {
        const double s0 = o.s0;
        p.denoiser_for = [s0](const Camera&) {
            return make_feature_readout_denoiser(s0);
        };
    }
    p.mlp = DecoderMlp::passthrough(channels);
    p.aggregation = o.aggregation == "max" ? AggregationMode::kMax
                                           : AggregationMode::kMean;
    p.render.n_depth_samples = o.depth_samples;
    p.render.sampling_mode =
        o.midpoint ? DepthSampling::kMidpoint : DepthSampling::kStratified;
    p.render.half_resolution = !o.full_res;
    p.schedule = build_schedule(o.steps, o.sigma_max, o.sigma_min, o.rho);
    p.guidance.g = o.guidance;
    p.one_step = o.one_step;
    p.one_step_deterministic = o.deterministic;
    const int noise_channels = channels;
    p.uncond_feature = [noise_channels](const Camera& cam, uint64_t seed) {
        RngStream rng(seed);
        return noise_feature_image(cam, noise_channels, rng);
    };
    return built;
}

json frame_metrics(const ToyScene& scene, const Tensor& image, const Camera& cam,
                   int fine_samples) {
    const Tensor gt = render_ground_truth(scene, cam, fine_samples).image;
    json j;
    j["psnr"] = psnr(image, gt);
    if (cam.height >= 11 && cam.width >= 11) j["ssim"] = ssim(image, gt);
    return j;
}

std::string ref_string(const FrameRef& r) {
    return (r.kind == FrameRef::Kind::kInput ? "input:" : "generated:") +
           std::to_string(r.index);
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

int run_schedule(int n, double sigma_max, double sigma_min, double rho) {
    NoiseSchedule s;
    try {
        s = build_schedule(n, sigma_max, sigma_min, rho);
    } catch (const std::invalid_argument& e) {
        std::cerr << "schedule: " << e.what() << "\n";
        return kExitUsage;
    }
    for (double sigma : s.sigmas) std::printf("%.17g\n", sigma);
    return kExitOk;
}

int run_sample(const PipelineOpts& o, int frame_index, const std::string& out_path,
               const std::string& stats_path) {
    BuiltPipeline built = build_pipeline(o);
    const SceneManifest inputs_manifest = load_manifest(o.inputs_path);
    const SceneManifest traj_manifest = load_manifest(o.traj_path);
    if (frame_index < 0 || size_t(frame_index) >= traj_manifest.frames.size())
        throw IoError(IoCode::kParseError, "sample: --frame out of range");

    const std::vector<Frame> inputs = load_input_frames(inputs_manifest, o.resolution);
    const Camera target = [&] {
        Camera cam = traj_manifest.camera(size_t(frame_index), o.resolution,
                                          o.resolution);
        cam.validate();
        return cam;
    }();

    const Pipeline& p = built.pipeline;
    const RngStream root(o.seed);
    const RngStream frame_rng = root.child("frame", uint64_t(frame_index));

    std::vector<FeatureVolume> volumes;
    for (const Frame& f : inputs) volumes.push_back(p.encoder(f));
    FeatureField field{std::move(volumes), p.mlp, p.aggregation};
    RenderConfig cfg = p.render;
    cfg.rng_seed = frame_rng.child_seed("render");
    FeatureImage feature = render_feature_image(field, target, cfg);

    FeatureImage noise_f;
    Conditioning cc;
    cc.cond = &feature;
    if (o.unconditional || p.guidance.g != 0.0) {
        noise_f = p.uncond_feature(target, frame_rng.child_seed("uncond"));
        if (o.unconditional) cc.cond = &noise_f;
        cc.uncond = &noise_f;
    }

    const std::vector<uint32_t> shape = {3, uint32_t(target.height),
                                         uint32_t(target.width)};
    RngStream sample_rng = frame_rng.child("sample");
    const Denoiser denoiser = p.denoiser_for(target);
    Tensor image;
    if (p.one_step) {
        image = one_step_inference(denoiser, cc.cond, p.schedule.sigmas.at(0),
                                   sample_rng, p.one_step_deterministic, shape);
    } else {
        image = heun_sample(denoiser, cc, p.schedule, p.guidance, sample_rng, shape);
    }

    write_image_png(out_path, image);
    json stats = frame_metrics(built.scene, image, target, o.fine_samples);
    stats["frame"] = frame_index;
    stats["out"] = out_path;
    if (!stats_path.empty()) {
        std::ofstream os(stats_path);
        os << stats.dump(2) << "\n";
    }
    std::ofstream(out_path + ".config.json")
        << pipeline_opts_json(o, frame_index, out_path, stats_path).dump(2) << "\n";
    std::cout << stats.dump(2) << "\n";
    return kExitOk;
}

int run_sequence(const PipelineOpts& o, const std::string& policy_name, int k_random,
                 int window, int stride, int two_pass_window,
                 const std::string& out_dir) {
    BuiltPipeline built = build_pipeline(o);
    const SceneManifest inputs_manifest = load_manifest(o.inputs_path);
    const SceneManifest traj_manifest = load_manifest(o.traj_path);
    const std::vector<Frame> inputs = load_input_frames(inputs_manifest, o.resolution);

    std::vector<Camera> trajectory;
    for (size_t i = 0; i < traj_manifest.frames.size(); ++i) {
        Camera cam = traj_manifest.camera(i, o.resolution, o.resolution);
        cam.validate();
        trajectory.push_back(cam);
    }

    ConditioningPolicy policy;
    if (policy_name == "inputs-only") policy.kind = PolicyKind::kInputsOnly;
    else if (policy_name == "previous-only") policy.kind = PolicyKind::kPreviousOnly;
    else if (policy_name == "baseline") policy.kind = PolicyKind::kBaseline;
    else if (policy_name == "long-range") policy.kind = PolicyKind::kLongRange;
    else if (policy_name == "two-pass") policy.kind = PolicyKind::kTwoPass;
    else policy.kind = PolicyKind::kStochastic;
    policy.k_random = k_random;
    policy.window = window;
    policy.stride = stride;
    policy.two_pass_window = two_pass_window;
    policy.stochastic_steps = o.steps;

    fs::create_directories(out_dir);
    const SequenceResult result = generate_sequence(
        built.pipeline, trajectory, inputs, policy, RngStream(o.seed));

    json metrics = json::array();
    json audit;
    audit["policy"] = policy_name;
    audit["passes"] = result.passes;
    audit["feature_renders"] = result.feature_renders;
    audit["frames"] = json::array();
    for (size_t t = 0; t < result.frames.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu.png", t);
        const std::string path = (fs::path(out_dir) / name).string();
        write_image_png(path, result.frames[t].image);

        json m = frame_metrics(built.scene, result.frames[t].image,
                               result.frames[t].camera, o.fine_samples);
        m["index"] = t;
        m["image"] = name;
        metrics.push_back(std::move(m));

        json fa;
        fa["index"] = t;
        fa["conditioning"] = json::array();
        for (const FrameRef& r : result.conditioning.at(t))
            fa["conditioning"].push_back(ref_string(r));
        if (!result.first_pass_conditioning.empty()) {
            fa["first_pass_conditioning"] = json::array();
            for (const FrameRef& r : result.first_pass_conditioning.at(t))
                fa["first_pass_conditioning"].push_back(ref_string(r));
        }
        audit["frames"].push_back(std::move(fa));
    }
    std::ofstream((fs::path(out_dir) / "metrics.json").string())
        << metrics.dump(2) << "\n";
    std::ofstream((fs::path(out_dir) / "run_manifest.json").string())
        << audit.dump(2) << "\n";
    std::ofstream((fs::path(out_dir) / "run_config.json").string())
        << pipeline_opts_json(o, -1, out_dir, "", policy_name, k_random, window,
                              stride, two_pass_window)
               .dump(2)
        << "\n";
    std::cout << "wrote " << result.frames.size() << " frames to " << out_dir << "\n";
    return kExitOk;
}

int run_demo(const std::string& out_dir, int resolution, int n_inputs, int n_frames) {
    fs::create_directories(out_dir);
    const ToyScene scene = demo_scene();
    save_scene((fs::path(out_dir) / "scene.json").string(), scene);

    SceneManifest inputs;
    inputs.near = 1.2;
    inputs.far = 2.8;
    for (int i = 0; i < n_inputs; ++i) {
        const Camera cam = orbit_camera(2.0, -12.0 * i, 8.0, {0, 0, 0}, 45.0,
                                        resolution, resolution, 1.2, 2.8);
        char name[32];
        std::snprintf(name, sizeof(name), "input_%02d.png", i);
        write_image_png((fs::path(out_dir) / name).string(),
                        render_ground_truth(scene, cam, 2048).image);
        ManifestFrame f;
        f.image_path = name;
        f.pose = cam.pose;
        f.fov_y_deg = cam.fov_y_deg;
        inputs.frames.push_back(f);
    }
    save_manifest((fs::path(out_dir) / "inputs.json").string(), inputs);

    SceneManifest traj;
    traj.near = 1.2;
    traj.far = 2.8;
    for (int i = 0; i < n_frames; ++i) {
        const Camera cam = orbit_camera(2.0, 12.0 * (i + 1), 8.0, {0, 0, 0}, 45.0,
                                        resolution, resolution, 1.2, 2.8);
        ManifestFrame f;
        f.pose = cam.pose;
        f.fov_y_deg = cam.fov_y_deg;
        traj.frames.push_back(f);
    }
    save_manifest((fs::path(out_dir) / "trajectory.json").string(), traj);
    std::cout << "wrote demo scene, " << n_inputs << " input view(s), and a "
              << n_frames << "-frame trajectory to " << out_dir << "\n";
    return kExitOk;
}

// One entry of the oracle-check battery.
struct Check {
    std::string id;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

std::vector<Check> run_oracle_checks() {
    std::vector<Check> checks;
    auto push = [&checks](const std::string& id, double measured, double tol) {
        checks.push_back({id, measured, tol, measured <= tol});
    };

    {
        const NoiseSchedule s = build_schedule(25, 80.0, 0.002, 7.0);
        push("schedule_endpoints",
             std::max(std::abs(s.sigmas[0] - 80.0) / 80.0,
                      std::abs(s.sigmas[24] - 0.002) / 0.002),
             1e-12);
    }
    {
        Eigen::ArrayXd taus(1), deltas(1);
        taus << 2.0;
        deltas << 0.5;
        Eigen::MatrixXd feats(1, 1);
        feats << 1.0;
        const CompositeResult res = composite(taus, feats, deltas);
        push("composite_closed_form",
             std::abs(res.alpha - (1.0 - std::exp(-1.0))), 1e-12);
    }
    {
        const ToyScene scene = demo_scene();
        const Camera cam =
            orbit_camera(2.0, 20.0, 10.0, {0, 0, 0}, 45.0, 16, 16, 1.2, 2.8);
        FeatureField field{{synthetic_encode(scene, cam, 16, 32)},
                           DecoderMlp::passthrough(16), AggregationMode::kMean};
        RenderConfig coarse;
        coarse.n_depth_samples = 64;
        coarse.half_resolution = false;
        coarse.rng_seed = 7;
        RenderConfig fine;
        fine.n_depth_samples = 1024;
        fine.sampling_mode = DepthSampling::kMidpoint;
        fine.half_resolution = false;
        const FeatureImage a = render_feature_image(field, cam, coarse);
        const FeatureImage b = render_feature_image(field, cam, fine);
        push("renderer_vs_fine_quadrature", mean_abs_diff(a.data, b.data), 1e-2);
    }
    {
        const double tau = 1.3;
        const ToyScene scene = slab_scene(0.5, 1.5, tau);
        Camera cam;
        cam.fov_y_deg = 40.0;
        cam.width = 8;
        cam.height = 8;
        cam.near = 0.5;
        cam.far = 1.5;
        FeatureField field{{synthetic_encode(scene, cam, 16, 16)},
                           DecoderMlp::passthrough(16), AggregationMode::kMean};
        RenderConfig cfg;
        cfg.n_depth_samples = 4096;
        cfg.sampling_mode = DepthSampling::kMidpoint;
        cfg.half_resolution = false;
        const FeatureImage img = render_feature_image(field, cam, cfg);
        const std::vector<Ray> rays = camera_rays(cam);
        double worst = 0.0;
        for (size_t p = 0; p < rays.size(); ++p) {
            const double path = rays[p].t_far - rays[p].t_near;
            worst = std::max(worst, std::abs(double(img.alpha[p]) -
                                             (1.0 - std::exp(-tau * path))));
        }
        push("slab_alpha_analytic", worst, 1e-4);
    }
    {
        GaussianOracle oracle{Tensor({1}), 0.2};
        oracle.mu[0] = 0.3f;
        const Denoiser den = make_gaussian_oracle_denoiser(oracle);
        const NoiseSchedule s = build_schedule(25);
        RngStream rng(17);
        const int n = 2000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            RngStream child = rng.child("sample", uint64_t(i));
            const Tensor y = heun_sample(den, {}, s, GuidanceConfig{}, child, {1});
            sum += y[0];
            sq += double(y[0]) * double(y[0]);
        }
        const double mean = sum / n;
        const double stddev = std::sqrt(sq / n - mean * mean);
        push("gaussian_sampler_mean", std::abs(mean - 0.3), 0.02);
        push("gaussian_sampler_std", std::abs(stddev - 0.2) / 0.2, 0.08);
    }
    {
        RngStream rng(23);
        double worst = 0.0;
        int checked = 0;
        while (checked < 20) {
            const DecoderMlp mlp = DecoderMlp::random(rng.next_u64());
            Eigen::VectorXd w(16);
            for (int i = 0; i < 16; ++i) w[i] = rng.normal();
            const Eigen::VectorXd a1 = mlp.w1 * w + mlp.b1;
            const Eigen::VectorXd h1 = a1.array().max(0.0).matrix();
            const Eigen::VectorXd a2 = mlp.w2 * h1 + mlp.b2;
            if (a1.cwiseAbs().minCoeff() < 1e-3 || a2.cwiseAbs().minCoeff() < 1e-3)
                continue;
            ++checked;
            const Eigen::MatrixXd jac = decoder_jacobian(mlp, w);
            const double h = 1e-4;
            for (int col = 0; col < 16; col += 5) {
                Eigen::VectorXd wp = w, wm = w;
                wp[col] += h;
                wm[col] -= h;
                const Eigen::VectorXd fp = nvs::detail::mlp_raw(mlp, wp);
                const Eigen::VectorXd fm = nvs::detail::mlp_raw(mlp, wm);
                for (int row = 0; row < 17; ++row) {
                    const double fd = (fp[row] - fm[row]) / (2.0 * h);
                    const double denom = std::max(std::abs(jac(row, col)), 1e-8);
                    worst = std::max(worst, std::abs(fd - jac(row, col)) / denom);
                }
            }
        }
        push("jacobian_vs_finite_differences", worst, 1e-4);
    }
    {
        Tensor plus({1}), minus({1});
        plus[0] = 0.6f;
        minus[0] = -0.6f;
        MixtureOracle mix{{{plus, 0.05, 0.5}, {minus, 0.05, 0.5}}};
        const Tensor out = mixture_oracle_denoise(mix, Tensor({1}), 1.0);
        push("mixture_symmetry", std::abs(out[0]), 1e-12);
    }
    {
        TrainingNoiseSampler sampler;
        RngStream rng(29);
        const int n = 20000;
        std::vector<double> draws(n);
        double log_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            draws[size_t(i)] = sample_training_sigma(sampler, rng);
            log_sum += std::log(draws[size_t(i)]);
        }
        std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
        push("training_sigma_median",
             std::abs(draws[size_t(n / 2)] - std::exp(-1.0)) / std::exp(-1.0), 0.05);
        push("training_sigma_log_mean", std::abs(log_sum / n + 1.0), 0.05);
    }
    return checks;
}

int run_oracle_check(const std::string& report_path) {
    const std::vector<Check> checks = run_oracle_checks();
    json report;
    report["checks"] = json::array();
    bool all_pass = true;
    for (const Check& c : checks) {
        std::printf("[%s] %-32s measured=%.3e tolerance=%.3e\n",
                    c.pass ? " ok " : "FAIL", c.id.c_str(), c.measured, c.tolerance);
        report["checks"].push_back({{"id", c.id},
                                    {"pass", c.pass},
                                    {"measured", c.measured},
                                    {"tolerance", c.tolerance}});
        all_pass = all_pass && c.pass;
    }
    report["all_pass"] = all_pass;
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        os << report.dump(2) << "\n";
    }
    return all_pass ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------
// Config-file expansion: --config FILE holds a JSON object of long option
// names (no leading dashes) to values; its entries are turned into flags
// that precede the explicit command line, so explicit flags win. Unknown
// keys surface as unknown options and exit with a usage error.

std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    if (args.size() < 2) return args;

    std::vector<std::string> rest;
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_path.empty()) return rest;

    std::ifstream is(config_path);
    if (!is) throw IoError(IoCode::kMissingFile, "config: cannot open " + config_path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw IoError(IoCode::kParseError, "config: not an object");

    std::vector<std::string> expanded;
    expanded.push_back(rest[0]);
    if (rest.size() >= 2) expanded.push_back(rest[1]);  // subcommand
    for (const auto& [key, value] : j.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) expanded.push_back("--" + key);
        } else if (value.is_string()) {
            expanded.push_back("--" + key);
            expanded.push_back(value.get<std::string>());
        } else {
            expanded.push_back("--" + key);
            expanded.push_back(value.dump());
        }
    }
    for (size_t i = 2; i < rest.size(); ++i) expanded.push_back(rest[i]);
    return expanded;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale novel view synthesis: latent feature volumes, "
                 "feature-field volume rendering, and diffusion-style sampling"};
    app.require_subcommand(1);

    // schedule
    int sched_steps = 25;
    double sched_max = 80.0, sched_min = 0.002, sched_rho = 7.0;
    CLI::App* sched = app.add_subcommand("schedule", "Print the noise schedule");
    sched->add_option("--steps", sched_steps, "Number of noise levels");
    sched->add_option("--sigma-max", sched_max, "First noise level");
    sched->add_option("--sigma-min", sched_min, "Last nonzero noise level");
    sched->add_option("--rho", sched_rho, "Spacing exponent");

    // sample
    PipelineOpts sample_opts;
    int sample_frame = 0;
    std::string sample_out, sample_stats;
    CLI::App* sample = app.add_subcommand("sample", "Synthesize one novel view");
    add_pipeline_opts(sample, sample_opts);
    sample->add_option("--frame", sample_frame, "Trajectory frame index");
    sample->add_option("--out", sample_out, "Output PNG path")->required();
    sample->add_option("--stats", sample_stats, "Metrics JSON path");

    // sequence
    PipelineOpts seq_opts;
    std::string seq_policy = "baseline", seq_out;
    int seq_k_random = 5, seq_window = 20, seq_stride = 15, seq_two_pass = 4;
    CLI::App* sequence =
        app.add_subcommand("sequence", "Autoregressively synthesize a trajectory");
    add_pipeline_opts(sequence, seq_opts);
    sequence
        ->add_option("--policy", seq_policy,
                     "inputs-only | previous-only | baseline | long-range | "
                     "two-pass | stochastic")
        ->check(CLI::IsMember({"inputs-only", "previous-only", "baseline",
                               "long-range", "two-pass", "stochastic"}));
    sequence->add_option("--k-random", seq_k_random, "Random draws per frame");
    sequence->add_option("--window", seq_window, "Long-range draw window");
    sequence->add_option("--stride", seq_stride, "Long-range anchor stride");
    sequence->add_option("--two-pass-window", seq_two_pass,
                         "Second-pass nearest-frame count");
    sequence->add_option("--out", seq_out, "Output directory")->required();

    // oracle-check
    std::string report_path;
    CLI::App* oracle =
        app.add_subcommand("oracle-check", "Run the brute-force cross-check battery");
    oracle->add_option("--report", report_path, "Machine-readable JSON report path");

    // demo
    std::string demo_out = "demo";
    int demo_res = 64, demo_inputs = 1, demo_frames = 8;
    CLI::App* demo =
        app.add_subcommand("demo", "Write a demo scene, inputs, and trajectory");
    demo->add_option("--out", demo_out, "Output directory");
    demo->add_option("--resolution", demo_res, "Rendered input resolution");
    demo->add_option("--n-inputs", demo_inputs, "Number of input views");
    demo->add_option("--n-frames", demo_frames, "Trajectory length");

    try {
        const std::vector<std::string> args = expand_config(argc, argv);
        std::vector<const char*> cargs;
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(int(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return e.code() == IoCode::kMissingFile ? kExitUsage : kExitRuntime;
    }

    try {
        if (sched->parsed())
            return run_schedule(sched_steps, sched_max, sched_min, sched_rho);
        if (sample->parsed()) {
            if (sample_opts.steps < 1) {
                std::cerr << "sample: --steps must be >= 1\n";
                return kExitUsage;
            }
            return run_sample(sample_opts, sample_frame, sample_out, sample_stats);
        }
        if (sequence->parsed()) {
            if (seq_policy == "stochastic" && sequence->count("--steps") == 0)
                seq_opts.steps = 256;  // stochastic conditioning default
            return run_sequence(seq_opts, seq_policy, seq_k_random, seq_window,
                                seq_stride, seq_two_pass, seq_out);
        }
        if (oracle->parsed()) return run_oracle_check(report_path);
        if (demo->parsed())
            return run_demo(demo_out, demo_res, demo_inputs, demo_frames);
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return e.code() == IoCode::kMissingFile ? kExitUsage : kExitRuntime;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
