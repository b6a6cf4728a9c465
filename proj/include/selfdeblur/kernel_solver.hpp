#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "selfdeblur/fft.hpp"
#include "selfdeblur/image.hpp"
#include "selfdeblur/imgmath.hpp"

namespace selfdeblur {

struct KernelSolveConfig {
    double lambda_h = 10.0;
    double gamma = 10.0;
    double keep_fraction = 0.10;
    double refine_threshold = 0.05;
    /// Restrict the gradient-domain fidelity to Sobel-selected edges.
    bool use_edge_mask = true;

    void validate() const {
        if (!(lambda_h > 0.0)) throw std::invalid_argument("KernelSolveConfig: lambda_h must be > 0");
        if (!(gamma >= 0.0)) throw std::invalid_argument("KernelSolveConfig: gamma must be >= 0");
        if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
            throw std::invalid_argument("KernelSolveConfig: keep_fraction must be in (0, 1]");
        }
        if (!(refine_threshold >= 0.0 && refine_threshold < 1.0)) {
            throw std::invalid_argument("KernelSolveConfig: refine_threshold must be in [0, 1)");
        }
    }
};

/// Intermediates of one kernel solve. The m x n maps are row-major crops of
/// the image-sized inverse transforms around the origin.
struct SolveWorkspace {
    int height = 0;
    int width = 0;
    int rows = 0;  // m
    int cols = 0;  // n
    std::vector<double> psi;  // |F(dr x)|^2 + |F(dc x)|^2 + lambda_h, image sized
    Spectrum gamma_spec;      // conj(F(dr x)) F(dr y) + conj(F(dc x)) F(dc y)
    std::vector<double> z;
    std::vector<double> f;
    std::vector<double> kmat;
    std::vector<double> u;  // row offset from the kernel center
    std::vector<double> v;  // column offset from the kernel center
    double imag_residue = 0.0;
};

enum class SolvePath { Woodbury, Dense };

inline const char* to_string(SolvePath p) {
    return p == SolvePath::Woodbury ? "woodbury" : "dense";
}

struct KernelSolveResult {
    Kernel kernel;  // raw, unrefined
    SolvePath path = SolvePath::Woodbury;
    SolveWorkspace workspace;
};

/// Offset maps U (row offset) and V (column offset) of an m x n support.
inline void fill_offset_maps(SolveWorkspace& ws) {
    const int m = ws.rows;
    const int n = ws.cols;
    ws.u.resize(static_cast<std::size_t>(m) * n);
    ws.v.resize(ws.u.size());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            ws.u[static_cast<std::size_t>(i) * n + j] = i - (m - 1) / 2;
            ws.v[static_cast<std::size_t>(i) * n + j] = j - (n - 1) / 2;
        }
    }
}

/// Builds Psi, Gamma and the cropped Z, F, K maps for the gradient-domain
/// problem with y, x single-channel and the same size.
inline SolveWorkspace prepare_kernel_system(const Image& y, const Image& x, KernelSize size,
                                            const KernelSolveConfig& cfg) {
    cfg.validate();
    if (x.channels != 1 || y.channels != 1) {
        throw std::invalid_argument("prepare_kernel_system: single-channel images required");
    }
    if (!x.same_shape(y)) throw std::invalid_argument("prepare_kernel_system: y and x differ in size");
    if (size.rows % 2 == 0 || size.cols % 2 == 0 || size.rows <= 0 || size.cols <= 0) {
        throw std::invalid_argument("prepare_kernel_system: kernel dimensions must be odd");
    }
    if (size.rows >= x.height || size.cols >= x.width) {
        throw std::invalid_argument("prepare_kernel_system: kernel must be smaller than the image");
    }

    SolveWorkspace ws;
    ws.height = x.height;
    ws.width = x.width;
    ws.rows = size.rows;
    ws.cols = size.cols;
    const int h = ws.height;
    const int w = ws.width;

    Gradient gx = grad(x);
    Gradient gy = grad(y);
    if (cfg.use_edge_mask) {
        const EdgeMask mask = select_edges(x, cfg.keep_fraction);
        for (std::size_t i = 0; i < x.plane_size(); ++i) {
            if (!mask.combined[i]) {
                gx.rows.data[i] = gx.cols.data[i] = 0.0;
                gy.rows.data[i] = gy.cols.data[i] = 0.0;
            }
        }
    }

    const Spectrum xr = fft2(gx.rows.data, h, w);
    const Spectrum xc = fft2(gx.cols.data, h, w);
    const Spectrum yr = fft2(gy.rows.data, h, w);
    const Spectrum yc = fft2(gy.cols.data, h, w);

    ws.psi.resize(xr.size());
    ws.gamma_spec.resize(xr.size());
    for (std::size_t i = 0; i < xr.size(); ++i) {
        ws.psi[i] = std::norm(xr[i]) + std::norm(xc[i]) + cfg.lambda_h;
        ws.gamma_spec[i] = std::conj(xr[i]) * yr[i] + std::conj(xc[i]) * yc[i];
    }

    fill_offset_maps(ws);

    auto solve_cropped = [&](Spectrum spec) {
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] /= ws.psi[i];
        double residue = 0.0;
        auto full = ifft2_real(std::move(spec), h, w, &residue);
        ws.imag_residue = std::max(ws.imag_residue, residue);
        return crop_centered(full, h, w, ws.rows, ws.cols);
    };

    ws.z = solve_cropped(ws.gamma_spec);
    ws.f = solve_cropped(fft2(embed_centered(ws.u, ws.rows, ws.cols, h, w), h, w));
    ws.kmat = solve_cropped(fft2(embed_centered(ws.v, ws.rows, ws.cols, h, w), h, w));
    return ws;
}

namespace detail {
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
}  // namespace detail

/// A h = h + gamma (f u^T + k v^T) h, applied without forming A.
inline std::vector<double> apply_coefficient_matrix(const SolveWorkspace& ws, double gamma,
                                                    const std::vector<double>& h) {
    const double uh = detail::dot(ws.u, h);
    const double vh = detail::dot(ws.v, h);
    std::vector<double> out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        out[i] = h[i] + gamma * (ws.f[i] * uh + ws.kmat[i] * vh);
    }
    return out;
}

/// Explicit mn x mn coefficient matrix; used by the dense fallback.
inline Eigen::MatrixXd dense_coefficient_matrix(const SolveWorkspace& ws, double gamma) {
    const auto mn = static_cast<Eigen::Index>(ws.z.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(mn, mn);
    for (Eigen::Index i = 0; i < mn; ++i) {
        for (Eigen::Index j = 0; j < mn; ++j) {
            a(i, j) += gamma * (ws.f[i] * ws.u[j] + ws.kmat[i] * ws.v[j]);
        }
    }
    return a;
}

inline std::vector<double> solve_dense(const SolveWorkspace& ws, double gamma) {
    const Eigen::MatrixXd a = dense_coefficient_matrix(ws, gamma);
    const Eigen::Map<const Eigen::VectorXd> rhs(ws.z.data(), static_cast<Eigen::Index>(ws.z.size()));
    const Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
    return {sol.data(), sol.data() + sol.size()};
}

/// Solves (I + B C^T) h = z with B = gamma [f k], C = [u v] through the 2x2
/// capacitance matrix S = I + C^T B. Returns false if S is numerically singular.
inline bool solve_woodbury(const SolveWorkspace& ws, double gamma, std::vector<double>& h) {
    const double s00 = 1.0 + gamma * detail::dot(ws.u, ws.f);
    const double s01 = gamma * detail::dot(ws.u, ws.kmat);
    const double s10 = gamma * detail::dot(ws.v, ws.f);
    const double s11 = 1.0 + gamma * detail::dot(ws.v, ws.kmat);
    const double det = s00 * s11 - s01 * s10;
    const double scale = std::abs(s00 * s11) + std::abs(s01 * s10);
    if (!std::isfinite(det) || std::abs(det) <= 1e-12 * scale) return false;

    const double cu = detail::dot(ws.u, ws.z);
    const double cv = detail::dot(ws.v, ws.z);
    // t = S^{-1} C^T z
    const double t0 = (s11 * cu - s01 * cv) / det;
    const double t1 = (-s10 * cu + s00 * cv) / det;
    h.resize(ws.z.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = ws.z[i] - gamma * (ws.f[i] * t0 + ws.kmat[i] * t1);
    }
    return true;
}

/// Closed-form kernel estimate from the gradient-domain least-squares
/// problem with l2 and center-of-mass regularization. RGB inputs are reduced
/// to luminance first. The returned kernel is not refined.
inline KernelSolveResult solve_kernel(const Image& y, const Image& x, KernelSize size,
                                      const KernelSolveConfig& cfg) {
    KernelSolveResult res;
    res.workspace = prepare_kernel_system(luminance(y), luminance(x), size, cfg);
    std::vector<double> h;
    if (solve_woodbury(res.workspace, cfg.gamma, h)) {
        res.path = SolvePath::Woodbury;
    } else {
        h = solve_dense(res.workspace, cfg.gamma);
        res.path = SolvePath::Dense;
    }
    res.kernel = Kernel(size.rows, size.cols);
    res.kernel.weights = std::move(h);
    return res;
}

// ---------------------------------------------------------------------------
// Center of mass
// ---------------------------------------------------------------------------

struct SubpixelPoint {
    double row = 0.0;
    double col = 0.0;
};

/// Intensity-weighted mean coordinate in 0-based indexing.
inline SubpixelPoint center_of_mass(const Kernel& h) {
    double total = 0.0;
    double abs_total = 0.0;
    double rsum = 0.0;
    double csum = 0.0;
    for (int i = 0; i < h.rows; ++i) {
        for (int j = 0; j < h.cols; ++j) {
            const double w = h.at(i, j);
            total += w;
            abs_total += std::abs(w);
            rsum += w * i;
            csum += w * j;
        }
    }
    if (abs_total == 0.0 || std::abs(total) <= 1e-300) {
        throw std::invalid_argument("center_of_mass: kernel weights sum to zero");
    }
    return {rsum / total, csum / total};
}

/// Squared distance between the centroid and the geometric center.
inline double center_penalty(const Kernel& h) {
    const SubpixelPoint p = center_of_mass(h);
    const double dr = p.row - h.center_row();
    const double dc = p.col - h.center_col();
    return dr * dr + dc * dc;
}

/// The linearized penalty (sum U.h)^2 + (sum V.h)^2 that the closed form
/// actually minimizes; equals center_penalty for unit-sum kernels.
inline double linearized_center_penalty(const Kernel& h) {
    double a = 0.0;
    double b = 0.0;
    for (int i = 0; i < h.rows; ++i) {
        for (int j = 0; j < h.cols; ++j) {
            a += (i - h.center_row()) * h.at(i, j);
            b += (j - h.center_col()) * h.at(i, j);
        }
    }
    return a * a + b * b;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

struct RefineResult {
    Kernel kernel;
    /// Everything was zeroed; `kernel` is the centered delta.
    bool fallback = false;
};

/// Clamp negatives, drop entries below `threshold * max`, renormalize.
inline RefineResult refine_kernel(const Kernel& h, double threshold) {
    RefineResult out{h, false};
    auto& w = out.kernel.weights;
    double peak = 0.0;
    for (auto& v : w) {
        if (!(v > 0.0)) v = 0.0;  // also clears NaN
        peak = std::max(peak, v);
    }
    const double cut = threshold * peak;
    double total = 0.0;
    for (auto& v : w) {
        if (v < cut) v = 0.0;
        total += v;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        return {Kernel::delta(h.rows, h.cols), true};
    }
    for (auto& v : w) v /= total;
    return out;
}

inline RefineResult refine_kernel(const Kernel& h, const KernelSolveConfig& cfg) {
    return refine_kernel(h, cfg.refine_threshold);
}

}  // namespace selfdeblur
