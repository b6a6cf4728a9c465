#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfdeblur/image.hpp"

namespace selfdeblur {

/// Reported PSNR for identical images.
inline constexpr double kPsnrCap = 100.0;

inline void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": image dimensions differ");
}

inline double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE) over all channels, peak 1. Capped at kPsnrCap.
inline double psnr(const Image& a, const Image& b) {
    const double e = mse(a, b);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / e));
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> g(static_cast<std::size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2.0 * sigma * sigma));
            g[static_cast<std::size_t>(i) * size + j] = v;
            total += v;
        }
    }
    for (auto& v : g) v /= total;
    return g;
}

/// Mean SSIM of one channel over all fully contained window positions.
inline double ssim_channel(const Image& a, const Image& b, int ch, const SsimParams& p = {}) {
    const int n = p.window;
    if (a.height < n || a.width < n) throw std::invalid_argument("ssim: image smaller than window");
    const auto g = gaussian_window(n, p.sigma);
    const double c1 = p.k1 * p.k1;
    const double c2 = p.k2 * p.k2;
    double acc = 0.0;
    int count = 0;
    for (int r = 0; r + n <= a.height; ++r) {
        for (int c = 0; c + n <= a.width; ++c) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    const double wgt = g[static_cast<std::size_t>(i) * n + j];
                    const double va = a.at(r + i, c + j, ch);
                    const double vb = b.at(r + i, c + j, ch);
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            const double num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / count;
}

/// Mean of per-channel SSIM.
inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
    require_same_shape(a, b, "ssim");
    double acc = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) acc += ssim_channel(a, b, ch, p);
    return acc / a.channels;
}

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    std::vector<double> channel_psnr;
    std::vector<double> channel_ssim;
    std::string aggregation = "rgb-mean";
};

inline MetricReport evaluate_metrics(const Image& result, const Image& reference,
                                     bool use_luminance = false) {
    require_same_shape(result, reference, "evaluate_metrics");
    MetricReport rep;
    if (use_luminance) {
        const Image la = luminance(result);
        const Image lb = luminance(reference);
        rep.psnr = psnr(la, lb);
        rep.ssim = ssim(la, lb);
        rep.channel_psnr = {rep.psnr};
        rep.channel_ssim = {rep.ssim};
        rep.aggregation = "luminance";
        return rep;
    }
    rep.psnr = psnr(result, reference);
    rep.ssim = ssim(result, reference);
    for (int ch = 0; ch < result.channels; ++ch) {
        const Image a = extract_channel(result, ch);
        const Image b = extract_channel(reference, ch);
        rep.channel_psnr.push_back(psnr(a, b));
        rep.channel_ssim.push_back(ssim_channel(a, b, 0));
    }
    return rep;
}

}  // namespace selfdeblur
