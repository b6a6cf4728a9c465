#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "selfdeblur/image.hpp"
#include "selfdeblur/imgmath.hpp"

namespace selfdeblur {

enum class TvMode { Isotropic, Anisotropic };

struct LossConfig {
    double lambda_x = 0.0;
    double charbonnier_eps = 1e-3;
    /// Per-scale multipliers; empty means 1 for every scale.
    std::vector<double> scale_weights;
    TvMode tv_mode = TvMode::Isotropic;

    void validate() const {
        if (!(lambda_x >= 0.0)) throw std::invalid_argument("LossConfig: lambda_x must be >= 0");
        if (!(charbonnier_eps > 0.0)) throw std::invalid_argument("LossConfig: charbonnier_eps must be > 0");
    }

    [[nodiscard]] double weight(std::size_t s) const {
        return scale_weights.empty() ? 1.0 : scale_weights.at(s);
    }
};

struct LossValue {
    double total = 0.0;
    std::vector<double> fidelity;  // ||y^s - h^s * x^s||_F^2 per scale, unweighted
    double tv = 0.0;               // sum_s w_s TV(x^s), before lambda_x
};

struct LossEvaluation {
    LossValue value;
    std::vector<Image> grad;  // dL/dx^s, empty unless requested
};

/// Charbonnier-smoothed total variation of every channel with circular
/// forward differences. Accumulates `scale * dTV/dx` into `g` if non-null.
inline double smoothed_tv(const Image& x, double eps, TvMode mode, Image* g = nullptr,
                          double scale = 1.0) {
    const int h = x.height;
    const int w = x.width;
    const double e2 = eps * eps;
    double total = 0.0;
    for (int ch = 0; ch < x.channels; ++ch) {
        for (int r = 0; r < h; ++r) {
            const int rn = (r + 1) % h;
            for (int c = 0; c < w; ++c) {
                const int cn = (c + 1) % w;
                const double v = x.at(r, c, ch);
                const double dr = x.at(rn, c, ch) - v;
                const double dc = x.at(r, cn, ch) - v;
                double gr = 0.0;
                double gc = 0.0;
                if (mode == TvMode::Isotropic) {
                    const double t = std::sqrt(dr * dr + dc * dc + e2);
                    total += t;
                    gr = dr / t;
                    gc = dc / t;
                } else {
                    const double tr = std::sqrt(dr * dr + e2);
                    const double tc = std::sqrt(dc * dc + e2);
                    total += tr + tc;
                    gr = dr / tr;
                    gc = dc / tc;
                }
                if (g) {
                    g->at(rn, c, ch) += scale * gr;
                    g->at(r, cn, ch) += scale * gc;
                    g->at(r, c, ch) -= scale * (gr + gc);
                }
            }
        }
    }
    return total;
}

/// Multi-scale self-supervised loss
///   sum_s w_s ( ||y^s - h^s * x^s||^2 + lambda_x TV_eps(x^s) )
/// over all channels. Kernels are constants.
inline LossEvaluation evaluate_loss(const std::vector<Image>& xs, const std::vector<Kernel>& hs,
                                    const std::vector<Image>& ys, const LossConfig& cfg,
                                    bool want_grad) {
    cfg.validate();
    if (xs.size() != hs.size() || xs.size() != ys.size()) {
        throw std::invalid_argument("loss: scale count mismatch between images, kernels and targets");
    }
    if (!cfg.scale_weights.empty() && cfg.scale_weights.size() != xs.size()) {
        throw std::invalid_argument("loss: scale_weights size mismatch");
    }
    LossEvaluation out;
    out.value.fidelity.resize(xs.size());
    for (std::size_t s = 0; s < xs.size(); ++s) {
        if (!xs[s].same_shape(ys[s])) throw std::invalid_argument("loss: image/target shape mismatch");
        const double ws = cfg.weight(s);
        Image residual = conv_circular(xs[s], hs[s]);
        double fid = 0.0;
        for (std::size_t i = 0; i < residual.size(); ++i) {
            residual.data[i] -= ys[s].data[i];
            fid += residual.data[i] * residual.data[i];
        }
        out.value.fidelity[s] = fid;
        out.value.total += ws * fid;

        Image g;
        if (want_grad) {
            g = correlate_circular(residual, hs[s]);
            for (auto& v : g.data) v *= 2.0 * ws;
        }
        if (cfg.lambda_x > 0.0) {
            const double tv = smoothed_tv(xs[s], cfg.charbonnier_eps, cfg.tv_mode,
                                          want_grad ? &g : nullptr, ws * cfg.lambda_x);
            out.value.tv += ws * tv;
            out.value.total += ws * cfg.lambda_x * tv;
        }
        if (want_grad) out.grad.push_back(std::move(g));
    }
    return out;
}

inline double loss(const std::vector<Image>& xs, const std::vector<Kernel>& hs,
                   const std::vector<Image>& ys, const LossConfig& cfg) {
    return evaluate_loss(xs, hs, ys, cfg, false).value.total;
}

inline std::vector<Image> loss_gradient_wrt_images(const std::vector<Image>& xs,
                                                   const std::vector<Kernel>& hs,
                                                   const std::vector<Image>& ys,
                                                   const LossConfig& cfg) {
    return evaluate_loss(xs, hs, ys, cfg, true).grad;
}

}  // namespace selfdeblur
