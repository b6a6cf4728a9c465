// selfdeblur_cli: synth / deblur / eval front end over the header library.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "selfdeblur/selfdeblur.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace selfdeblur;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(trim(item), &used));
            if (used != trim(item).size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("malformed number in " + what + ": '" + item + "'");
        }
    }
    if (out.size() != expected) throw UsageError(what + " expects " + std::to_string(expected) + " values");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    return parse_numbers(v, 1, key).front();
}

int to_int(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != static_cast<int>(d)) throw UsageError(key + " must be an integer");
    return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw UsageError(key + " must be true or false");
}

KernelSize parse_kernel_size(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) {
            const int n = std::stoi(text);
            return {n, n};
        }
        return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw UsageError("malformed kernel size '" + text + "' (use N or RxC)");
    }
}

/// file:<path>, motion:<length,angle>, gauss:<sigma,size>, walk:<steps,seed>
Kernel kernel_from_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw UsageError("kernel spec needs a kind prefix: " + spec);
    const std::string kind = spec.substr(0, colon);
    const std::string arg = spec.substr(colon + 1);
    if (kind == "file") return read_kernel_text(arg);
    if (kind == "motion") {
        const auto v = parse_numbers(arg, 2, "motion");
        return motion_kernel(v[0], v[1]);
    }
    if (kind == "gauss") {
        const auto v = parse_numbers(arg, 2, "gauss");
        if (v[1] < 1 || static_cast<int>(v[1]) % 2 == 0) throw UsageError("gauss size must be odd");
        return gaussian_kernel(v[0], static_cast<int>(v[1]));
    }
    if (kind == "walk") {
        const auto v = parse_numbers(arg, 2, "walk");
        return random_walk_kernel(static_cast<int>(v[0]), static_cast<std::uint64_t>(v[1]));
    }
    throw UsageError("unknown kernel kind '" + kind + "'");
}

const char* refine_name(KernelRefineMode m) {
    switch (m) {
        case KernelRefineMode::None: return "none";
        case KernelRefineMode::Light: return "light";
        case KernelRefineMode::Full: return "full";
    }
    return "light";
}

// ---------------------------------------------------------------------------
// key=value configuration
// ---------------------------------------------------------------------------

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "iters") cfg.max_iters = to_int(key, value);
    else if (key == "lr") cfg.lr = to_double(key, value);
    else if (key == "lr_halve_every") cfg.lr_halve_every = to_int(key, value);
    else if (key == "kernel_every") cfg.kernel_every = to_int(key, value);
    else if (key == "lambda_h") cfg.kernel.lambda_h = to_double(key, value);
    else if (key == "gamma") cfg.kernel.gamma = to_double(key, value);
    else if (key == "keep_fraction") cfg.kernel.keep_fraction = to_double(key, value);
    else if (key == "refine_threshold") cfg.kernel.refine_threshold = to_double(key, value);
    else if (key == "edge_mask") cfg.kernel.use_edge_mask = to_bool(key, value);
    else if (key == "lambda_x") cfg.loss.lambda_x = to_double(key, value);
    else if (key == "charbonnier_eps") cfg.loss.charbonnier_eps = to_double(key, value);
    else if (key == "tv_mode") {
        if (value == "isotropic") cfg.loss.tv_mode = TvMode::Isotropic;
        else if (value == "anisotropic") cfg.loss.tv_mode = TvMode::Anisotropic;
        else throw UsageError("tv_mode must be isotropic or anisotropic");
    } else if (key == "iteration_refine") {
        if (value == "none") cfg.iteration_refine = KernelRefineMode::None;
        else if (value == "light") cfg.iteration_refine = KernelRefineMode::Light;
        else if (value == "full") cfg.iteration_refine = KernelRefineMode::Full;
        else throw UsageError("iteration_refine must be none, light or full");
    } else if (key == "scales") cfg.generator.scales = to_int(key, value);
    else if (key == "levels") cfg.generator.levels = to_int(key, value);
    else if (key == "input_channels") cfg.generator.input_channels = to_int(key, value);
    else if (key == "base_width") cfg.generator.base_width = to_int(key, value);
    else if (key == "max_width") cfg.generator.max_width = to_int(key, value);
    else if (key == "fe_depth") cfg.generator.fe_depth = to_int(key, value);
    else if (key == "converter_depth") cfg.generator.converter_depth = to_int(key, value);
    else if (key == "kernel_size") cfg.kernel_size = parse_kernel_size(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
    else throw UsageError("unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

json config_json(const RunConfig& c) {
    return {
        {"preset", c.preset},
        {"seed", c.seed},
        {"iters", c.max_iters},
        {"lr", c.lr},
        {"lr_halve_every", c.lr_halve_every},
        {"kernel_every", c.kernel_every},
        {"kernel_size", {c.kernel_size.rows, c.kernel_size.cols}},
        {"iteration_refine", refine_name(c.iteration_refine)},
        {"lambda_h", c.kernel.lambda_h},
        {"gamma", c.kernel.gamma},
        {"keep_fraction", c.kernel.keep_fraction},
        {"refine_threshold", c.kernel.refine_threshold},
        {"edge_mask", c.kernel.use_edge_mask},
        {"lambda_x", c.loss.lambda_x},
        {"charbonnier_eps", c.loss.charbonnier_eps},
        {"tv_mode", c.loss.tv_mode == TvMode::Isotropic ? "isotropic" : "anisotropic"},
        {"scales", c.generator.scales},
        {"levels", c.generator.levels},
        {"input_channels", c.generator.input_channels},
        {"base_width", c.generator.base_width},
        {"max_width", c.generator.max_width},
        {"fe_depth", c.generator.fe_depth},
        {"converter_depth", c.generator.converter_depth},
    };
}

void write_json(const fs::path& path, const json& j) { write_text_file(path.string(), j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

struct GlobalOpts {
    std::optional<std::uint64_t> seed;
    std::string preset = "desk";
    std::string config;
    std::string out = ".";
};

struct SynthOpts {
    std::string sharp;
    std::string kernel;
    double noise = 0.01;
    std::string prefix = "blurred";
    bool float_dump = false;
};

struct DeblurOpts {
    std::string input;
    std::string kernel_size;
    std::optional<int> iters;
    std::optional<int> scales;
    std::optional<double> lr;
    std::vector<std::string> settings;
    std::string reference;
    std::string true_kernel;
    bool per_scale = false;
    bool float_dump = false;
    bool no_timing = false;
    bool quiet = false;
    int checkpoint_every = 0;
};

struct EvalOpts {
    std::string result;
    std::string reference;
    bool luminance = false;
    std::string format = "json";
    std::string report;
};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const GlobalOpts& g, const SynthOpts& o) {
    if (o.noise < 0) throw UsageError("--noise must be >= 0");
    const Kernel k = kernel_from_spec(o.kernel);
    const Image sharp = read_png(o.sharp);
    const std::uint64_t seed = g.seed.value_or(0);
    const Image blurred = synthesize_blur(sharp, k, o.noise, seed);

    const fs::path dir(g.out);
    fs::create_directories(dir);
    write_png((dir / (o.prefix + ".png")).string(), blurred);
    write_kernel_text((dir / (o.prefix + "_kernel.txt")).string(), k);
    write_kernel_png((dir / (o.prefix + "_kernel.png")).string(), k);
    if (o.float_dump) write_float_dump((dir / (o.prefix + ".f32")).string(), blurred);

    json manifest = {
        {"command", "synth"},
        {"sharp", o.sharp},
        {"kernel_spec", o.kernel},
        {"kernel_size", {k.rows, k.cols}},
        {"noise_sigma", o.noise},
        {"seed", seed},
        {"height", sharp.height},
        {"width", sharp.width},
        {"channels", sharp.channels},
        {"psnr_blurred", psnr(blurred, sharp)},
    };
    write_json(dir / (o.prefix + "_manifest.json"), manifest);
    std::cout << "wrote " << (dir / (o.prefix + ".png")).string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// deblur
// ---------------------------------------------------------------------------

double kernel_ncc(const Kernel& a, const Kernel& b) {
    if (a.rows != b.rows || a.cols != b.cols) return std::nan("");
    const double n = static_cast<double>(a.weights.size());
    const double ma = a.sum() / n;
    const double mb = b.sum() / n;
    double s = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        s += (a.weights[i] - ma) * (b.weights[i] - mb);
        sa += (a.weights[i] - ma) * (a.weights[i] - ma);
        sb += (b.weights[i] - mb) * (b.weights[i] - mb);
    }
    return s / std::sqrt(sa * sb);
}

int cmd_deblur(const GlobalOpts& g, const DeblurOpts& o) {
    RunConfig cfg = preset(g.preset);
    if (!g.config.empty()) apply_config_file(cfg, g.config);
    for (const auto& kv : o.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (!o.kernel_size.empty()) cfg.kernel_size = parse_kernel_size(o.kernel_size);
    if (cfg.kernel_size.rows == 0) throw UsageError("--kernel-size is required");
    if (o.iters) cfg.max_iters = *o.iters;
    if (o.scales) cfg.generator.scales = *o.scales;
    if (o.lr) cfg.lr = *o.lr;
    if (g.seed) cfg.seed = *g.seed;
    cfg.record_timing = !o.no_timing;

    const fs::path dir(g.out);
    fs::create_directories(dir);
    if (o.checkpoint_every > 0) {
        cfg.checkpoint_every = o.checkpoint_every;
        cfg.checkpoint_path = (dir / "checkpoint.bin").string();
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const Image y = read_png(o.input);
    std::optional<Image> reference;
    if (!o.reference.empty()) reference = read_png(o.reference);
    std::optional<Kernel> truth;
    if (!o.true_kernel.empty()) truth = read_kernel_text(o.true_kernel);

    json summary = {{"command", "deblur"}, {"input", o.input}, {"config", config_json(cfg)}};
    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    try {
        res = run(y, cfg, [&](const IterationRecord& r) {
            if (!o.quiet && (r.iter % 50 == 0 || r.iter == cfg.max_iters)) {
                std::fprintf(stderr, "iter %d loss %.6g lr %.3g\n", r.iter, r.loss, r.lr);
            }
        });
    } catch (const RunAborted& e) {
        write_text_file((dir / "trace.csv").string(), e.trace.to_csv());
        summary["status"] = "aborted";
        summary["error"] = e.what();
        summary["iterations_completed"] = e.trace.records.size();
        write_json(dir / "summary.json", summary);
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_png((dir / "deblurred.png").string(), res.image);
    write_kernel_png((dir / "kernel.png").string(), res.kernel);
    write_kernel_text((dir / "kernel.txt").string(), res.kernel);
    write_text_file((dir / "trace.csv").string(), res.trace.to_csv());
    if (o.float_dump) {
        write_float_dump((dir / "deblurred.f32").string(), res.image);
    }
    if (o.per_scale) {
        for (std::size_t s = 0; s < res.scales.size(); ++s) {
            const std::string tag = "scale" + std::to_string(s);
            write_png((dir / (tag + ".png")).string(), res.scales[s]);
            write_kernel_text((dir / (tag + "_kernel.txt")).string(), res.kernels[s]);
        }
    }

    summary["status"] = "ok";
    summary["iterations"] = res.trace.records.size();
    summary["seconds"] = cfg.record_timing ? seconds : 0.0;
    summary["initial_loss"] = res.trace.records.front().loss;
    summary["final_loss"] = res.trace.records.back().loss;
    summary["refine_fallbacks"] = res.fallback_count;
    summary["dense_solves"] = res.dense_solves;
    summary["final_kernel_fallback"] = res.final_fallback;
    if (reference) {
        const double before = psnr(y, *reference);
        const double after = psnr(res.image, *reference);
        summary["psnr_blurred"] = before;
        summary["psnr_deblurred"] = after;
        summary["psnr_gain"] = after - before;
        summary["ssim_deblurred"] = ssim(res.image, *reference);
    }
    if (truth) summary["kernel_ncc"] = kernel_ncc(res.kernel, *truth);
    write_json(dir / "summary.json", summary);
    std::cout << "wrote " << (dir / "deblurred.png").string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string name;
    std::optional<MetricReport> report;
    std::string error;
};

int cmd_eval(const EvalOpts& o) {
    if (o.format != "json" && o.format != "csv") throw UsageError("--format must be json or csv");
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
    if (fs::is_directory(o.result)) {
        if (!fs::is_directory(o.reference)) throw UsageError("--reference must be a directory too");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(o.result)) {
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            pairs.push_back({f.filename().string(), {f, fs::path(o.reference) / f.filename()}});
        }
    } else {
        pairs.push_back({fs::path(o.result).filename().string(), {o.result, o.reference}});
    }

    std::vector<EvalRow> rows;
    for (const auto& [name, paths] : pairs) {
        EvalRow row{name, std::nullopt, {}};
        try {
            row.report = evaluate_metrics(read_png(paths.first.string()), read_png(paths.second.string()),
                                          o.luminance);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }

    double psum = 0, ssum = 0;
    int ok = 0;
    for (const auto& r : rows) {
        if (!r.report) continue;
        psum += r.report->psnr;
        ssum += r.report->ssim;
        ++ok;
    }
    const bool failed = ok != static_cast<int>(rows.size());

    std::ostringstream os;
    if (o.format == "json") {
        json j = {{"aggregation", o.luminance ? "luminance" : "rgb-mean"}, {"rows", json::array()}};
        for (const auto& r : rows) {
            if (r.report) {
                j["rows"].push_back({{"name", r.name},
                                     {"psnr", r.report->psnr},
                                     {"ssim", r.report->ssim},
                                     {"channel_psnr", r.report->channel_psnr},
                                     {"channel_ssim", r.report->channel_ssim}});
            } else {
                j["rows"].push_back({{"name", r.name}, {"error", r.error}});
            }
        }
        j["average"] = {{"count", ok},
                        {"psnr", ok ? json(psum / ok) : json(nullptr)},
                        {"ssim", ok ? json(ssum / ok) : json(nullptr)}};
        os << j.dump(2) << "\n";
    } else {
        os << "name,psnr,ssim,error\n";
        char buf[64];
        for (const auto& r : rows) {
            if (r.report) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.report->psnr, r.report->ssim);
                os << r.name << ',' << buf << ",\n";
            } else {
                os << r.name << ",,," << '"' << r.error << '"' << "\n";
            }
        }
        if (ok) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", psum / ok, ssum / ok);
            os << "average," << buf << ",\n";
        } else {
            os << "average,,,\n";
        }
    }
    if (o.report.empty()) {
        std::cout << os.str();
    } else {
        write_text_file(o.report, os.str());
    }
    for (const auto& r : rows) {
        if (!r.report) std::cerr << "excluded " << r.name << ": " << r.error << "\n";
    }
    return failed ? kRuntime : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised blind deblurring: synthesize, deblur, evaluate"};
    app.require_subcommand(1);
    GlobalOpts g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed")->check(CLI::NonNegativeNumber);
    app.add_option("--preset", g.preset, "lai, kohler or desk")
        ->check(CLI::IsMember({"lai", "kohler", "desk"}))
        ->capture_default_str();
    app.add_option("--config", g.config, "key=value file applied over the preset")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "output directory")->capture_default_str();

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "blur a sharp PNG with a known kernel plus noise");
    synth->add_option("--sharp", so.sharp, "sharp PNG")->required();
    synth->add_option("--kernel", so.kernel, "file:<path> | motion:<len,deg> | gauss:<sigma,size> | walk:<steps,seed>")
        ->required();
    synth->add_option("--noise", so.noise, "Gaussian noise sigma on [0,1]")->capture_default_str();
    synth->add_option("--prefix", so.prefix, "output file prefix")->capture_default_str();
    synth->add_flag("--float-dump", so.float_dump, "also write float32 samples");

    DeblurOpts dopt;
    auto* deblur = app.add_subcommand("deblur", "estimate the sharp image and kernel");
    deblur->add_option("--input", dopt.input, "blurred PNG")->required();
    deblur->add_option("--kernel-size", dopt.kernel_size, "kernel support, N or RxC");
    deblur->add_option("--iters", dopt.iters, "iterations");
    deblur->add_option("--scales", dopt.scales, "input/output scales (1 = single-scale ablation)");
    deblur->add_option("--lr", dopt.lr, "initial learning rate");
    deblur->add_option("--set", dopt.settings, "key=value override, repeatable");
    deblur->add_option("--reference", dopt.reference, "sharp PNG for the PSNR summary");
    deblur->add_option("--true-kernel", dopt.true_kernel, "kernel text file for the NCC summary");
    deblur->add_option("--checkpoint-every", dopt.checkpoint_every, "save generator every N iterations");
    deblur->add_flag("--per-scale", dopt.per_scale, "write every scale's image and kernel");
    deblur->add_flag("--float-dump", dopt.float_dump, "write float32 samples of the result");
    deblur->add_flag("--no-timing", dopt.no_timing, "write 0 for wall times (byte-identical traces)");
    deblur->add_flag("--quiet", dopt.quiet, "no progress output");

    EvalOpts eo;
    auto* eval = app.add_subcommand("eval", "PSNR / SSIM of results against references");
    eval->add_option("--result", eo.result, "result PNG or directory")->required();
    eval->add_option("--reference", eo.reference, "reference PNG or directory")->required();
    eval->add_flag("--luminance", eo.luminance, "score luminance instead of RGB");
    eval->add_option("--format", eo.format, "json or csv")->capture_default_str();
    eval->add_option("--report", eo.report, "write the report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*synth) return cmd_synth(g, so);
        if (*deblur) return cmd_deblur(g, dopt);
        if (*eval) return cmd_eval(eo);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
