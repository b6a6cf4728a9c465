#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfdeblur/generator.hpp"
#include "selfdeblur/image.hpp"
#include "selfdeblur/imgmath.hpp"
#include "selfdeblur/io.hpp"
#include "selfdeblur/kernel_solver.hpp"
#include "selfdeblur/objective.hpp"

namespace selfdeblur {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState for_params(const GeneratorParams& p) {
        AdamState s;
        s.m = zero_grads(p);
        s.v = zero_grads(p);
        return s;
    }
};

/// Bias-corrected Adam update of every tensor in `params`.
inline void adam_step(GeneratorParams& params, const ParamGrads& grads, AdamState& state,
                      double lr) {
    if (grads.size() != params.tensors.size() || state.m.size() != params.tensors.size()) {
        throw std::invalid_argument("adam_step: tensor count mismatch");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        auto& theta = params.tensors[t].data;
        const auto& g = grads[t];
        auto& m = state.m[t];
        auto& v = state.v[t];
        if (g.size() != theta.size() || m.size() != theta.size()) {
            throw std::invalid_argument("adam_step: shape mismatch in " + params.tensors[t].name);
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Run configuration and presets
// ---------------------------------------------------------------------------

/// What happens to each solved kernel before it enters the loss.
enum class KernelRefineMode {
    None,   // raw solve
    Light,  // clamp negatives, renormalize
    Full,   // sparse refinement with refine_threshold
};

struct RunConfig {
    std::string preset = "custom";
    int max_iters = 1;
    double lr = 0.001;
    int lr_halve_every = 0;  // 0 keeps the rate constant
    KernelSize kernel_size{};
    int kernel_every = 1;
    KernelRefineMode iteration_refine = KernelRefineMode::Light;
    KernelSolveConfig kernel;
    LossConfig loss;
    GeneratorConfig generator;
    std::uint64_t seed = 0;
    /// When false the trace's wall-time column is written as 0.
    bool record_timing = true;
    int checkpoint_every = 0;
    std::string checkpoint_path;

    void validate() const {
        if (max_iters < 1) throw std::invalid_argument("RunConfig: max_iters must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("RunConfig: lr must be > 0");
        if (lr_halve_every < 0) throw std::invalid_argument("RunConfig: lr_halve_every must be >= 0");
        if (kernel_every < 1) throw std::invalid_argument("RunConfig: kernel_every must be >= 1");
        if (kernel_size.rows <= 0 || kernel_size.cols <= 0 || kernel_size.rows % 2 == 0 ||
            kernel_size.cols % 2 == 0) {
            throw std::invalid_argument("RunConfig: kernel size must be set and odd");
        }
        if (checkpoint_every < 0) throw std::invalid_argument("RunConfig: checkpoint_every must be >= 0");
        if (checkpoint_every > 0 && checkpoint_path.empty()) {
            throw std::invalid_argument("RunConfig: checkpoint_path required when checkpointing");
        }
        kernel.validate();
        loss.validate();
        generator.validate();
    }
};

/// lr(k) = lr / 2^floor(k / halve_every).
inline double learning_rate_at(const RunConfig& cfg, int iter) {
    if (cfg.lr_halve_every <= 0) return cfg.lr;
    return std::ldexp(cfg.lr, -(iter / cfg.lr_halve_every));
}

/// Named configurations. "lai" and "kohler" carry the published benchmark
/// settings; "desk" is a small configuration for 64x64 CPU runs.
inline RunConfig preset(const std::string& name) {
    RunConfig cfg;
    cfg.preset = name;
    if (name == "lai") {
        cfg.max_iters = 2000;
        cfg.lr = 0.001;
        cfg.lr_halve_every = 500;
        cfg.kernel.lambda_h = 10.0;
        cfg.kernel.gamma = 10.0;
        cfg.loss.lambda_x = 0.0;
    } else if (name == "kohler") {
        cfg.max_iters = 2000;
        cfg.lr = 0.01;
        cfg.lr_halve_every = 0;
        cfg.kernel.lambda_h = 120.0;
        cfg.kernel.gamma = 10.0;
        cfg.loss.lambda_x = 1.0;
    } else if (name == "desk") {
        cfg.max_iters = 600;
        cfg.lr = 0.002;
        cfg.lr_halve_every = 0;
        cfg.kernel.lambda_h = 10.0;
        cfg.kernel.gamma = 10.0;
        cfg.loss.lambda_x = 0.01;
        cfg.generator.base_width = 16;
        cfg.generator.max_width = 64;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

struct IterationRecord {
    int iter = 0;
    double loss = 0.0;
    std::vector<double> fidelity;
    double tv = 0.0;
    double lr = 0.0;
    double ms = 0.0;
};

struct RunTrace {
    std::vector<IterationRecord> records;

    /// CSV with header iter,loss,fid_s0..fid_s3,tv,lr,ms; absent scales are empty.
    [[nodiscard]] std::string to_csv() const {
        std::ostringstream os;
        os << "iter,loss,fid_s0,fid_s1,fid_s2,fid_s3,tv,lr,ms\n";
        os << std::setprecision(17);
        for (const auto& r : records) {
            os << r.iter << ',' << r.loss;
            for (std::size_t s = 0; s < 4; ++s) {
                os << ',';
                if (s < r.fidelity.size()) os << r.fidelity[s];
            }
            os << ',' << r.tv << ',' << r.lr << ',' << r.ms << '\n';
        }
        return os.str();
    }
};

struct RunAborted : std::runtime_error {
    RunAborted(const std::string& what, RunTrace partial)
        : std::runtime_error(what), trace(std::move(partial)) {}
    RunTrace trace;
};

struct RunResult {
    Image image;                 // x_K^0
    Kernel kernel;               // refined h_K^0
    std::vector<Image> scales;   // x_K^s
    std::vector<Kernel> kernels; // h_K^s as used in the last loss
    RunTrace trace;
    int fallback_count = 0;      // per-iteration refinements that fell back to a delta
    int dense_solves = 0;        // kernel solves that needed the dense path
    bool final_fallback = false;
    GeneratorParams params;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

inline Kernel refine_for_iteration(const Kernel& raw, const RunConfig& cfg, int& fallbacks) {
    switch (cfg.iteration_refine) {
        case KernelRefineMode::None:
            return raw;
        case KernelRefineMode::Light: {
            auto r = refine_kernel(raw, 0.0);
            fallbacks += r.fallback ? 1 : 0;
            return r.kernel;
        }
        case KernelRefineMode::Full: {
            auto r = refine_kernel(raw, cfg.kernel);
            fallbacks += r.fallback ? 1 : 0;
            return r.kernel;
        }
    }
    return raw;
}

/// Alternating minimization: per iteration, solve one kernel per scale from
/// the current latent images, then take one Adam step on the generator with
/// those kernels held fixed.
inline RunResult run(const Image& y, RunConfig cfg, const IterationCallback& on_iter = {}) {
    cfg.generator.output_channels = y.channels;
    cfg.generator.seed = cfg.seed;
    cfg.validate();
    if (!y.all_finite()) throw std::invalid_argument("run: input image has non-finite samples");

    const int scales = cfg.generator.scales;
    Pyramid pyr = build_pyramid(y, scales, 8);
    assign_kernel_sizes(pyr, cfg.kernel_size);

    GeneratorInit init = init_generator(cfg.generator, y.height, y.width);
    GeneratorParams& params = init.params;
    AdamState adam = AdamState::for_params(params);

    RunResult result;
    std::vector<Kernel> kernels(scales);
    for (int s = 0; s < scales; ++s) {
        kernels[s] = Kernel::delta(pyr.kernel_sizes[s].rows, pyr.kernel_sizes[s].cols);
    }
    std::vector<Kernel> raw_kernels = kernels;

    using clock = std::chrono::steady_clock;
    for (int k = 1; k <= cfg.max_iters; ++k) {
        const auto t0 = clock::now();
        GeneratorPass pass(params, init.inputs, true);
        const std::vector<Image> xs = pass.images();

        if ((k - 1) % cfg.kernel_every == 0) {
            for (int s = 0; s < scales; ++s) {
                KernelSolveResult solved =
                    solve_kernel(pyr.levels[s], xs[s], pyr.kernel_sizes[s], cfg.kernel);
                result.dense_solves += solved.path == SolvePath::Dense ? 1 : 0;
                raw_kernels[s] = std::move(solved.kernel);
                kernels[s] = refine_for_iteration(raw_kernels[s], cfg, result.fallback_count);
            }
        }

        LossEvaluation ev = evaluate_loss(xs, kernels, pyr.levels, cfg.loss, true);
        IterationRecord rec;
        rec.iter = k;
        rec.loss = ev.value.total;
        rec.fidelity = ev.value.fidelity;
        rec.tv = ev.value.tv;
        rec.lr = learning_rate_at(cfg, k);
        if (!std::isfinite(rec.loss)) {
            throw RunAborted("run: non-finite loss at iteration " + std::to_string(k), result.trace);
        }

        ParamGrads grads = pass.backward(ev.grad);
        adam_step(params, grads, adam, rec.lr);
        if (!params.all_finite()) {
            throw RunAborted("run: non-finite parameters after iteration " + std::to_string(k),
                             result.trace);
        }
        if (cfg.record_timing) {
            rec.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        }
        result.trace.records.push_back(rec);
        if (on_iter) on_iter(rec);
        if (cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) {
            save_checkpoint(cfg.checkpoint_path, params);
        }
    }

    result.scales = forward(params, init.inputs);
    result.image = result.scales.front();
    result.kernels = kernels;
    RefineResult final_kernel = refine_kernel(raw_kernels.front(), cfg.kernel);
    result.kernel = std::move(final_kernel.kernel);
    result.final_fallback = final_kernel.fallback;
    result.params = std::move(params);
    return result;
}

}  // namespace selfdeblur
