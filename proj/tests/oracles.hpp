#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the FFT path or the Woodbury solver.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "selfdeblur/image.hpp"

namespace oracle {

using selfdeblur::Image;
using selfdeblur::Kernel;

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

inline Image random_image(int h, int w, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w, c);
    for (auto& v : img.data) v = u(rng);
    return img;
}

inline Kernel random_kernel(int m, int n, std::uint64_t seed, bool normalize = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Kernel k(m, n);
    for (auto& v : k.weights) v = u(rng);
    if (normalize) {
        const double s = k.sum();
        for (auto& v : k.weights) v /= s;
    }
    return k;
}

/// Direct O(HWmn) periodic convolution.
inline Image conv_brute(const Image& img, const Kernel& k) {
    Image out(img.height, img.width, img.channels);
    const int cr = (k.rows - 1) / 2;
    const int cc = (k.cols - 1) / 2;
    for (int ch = 0; ch < img.channels; ++ch)
        for (int r = 0; r < img.height; ++r)
            for (int c = 0; c < img.width; ++c) {
                double acc = 0.0;
                for (int i = 0; i < k.rows; ++i)
                    for (int j = 0; j < k.cols; ++j)
                        acc += k.at(i, j) *
                               img.at(wrap(r - (i - cr), img.height), wrap(c - (j - cc), img.width), ch);
                out.at(r, c, ch) = acc;
            }
    return out;
}

/// Per-pixel forward differences with wrap.
inline std::pair<Image, Image> grad_brute(const Image& img) {
    Image dr(img.height, img.width), dc(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const double v = img.at(r, c);
            dr.at(r, c) = img.at(r + 1 == img.height ? 0 : r + 1, c) - v;
            dc.at(r, c) = img.at(r, c + 1 == img.width ? 0 : c + 1) - v;
        }
    return {dr, dc};
}

/// Dense N x N matrix of "convolve with `src`" acting on an image-sized
/// kernel h (offset (dr,dc) stored at index (dr mod H, dc mod W)).
inline Eigen::MatrixXd conv_matrix(const Image& src) {
    const int h = src.height;
    const int w = src.width;
    const int n = h * w;
    Eigen::MatrixXd g(n, n);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int qr = 0; qr < h; ++qr)
                for (int qc = 0; qc < w; ++qc)
                    g(r * w + c, qr * w + qc) = src.at(wrap(r - qr, h), wrap(c - qc, w));
    return g;
}

/// Solves the image-sized kernel problem
///   min ||dr y - h * dr x||^2 + ||dc y - h * dc x||^2 + lambda ||h||^2
///       + gamma (sum U h)^2 + gamma (sum V h)^2
/// with dense linear algebra, then crops the m x n window around offset 0.
/// U and V hold row/column offsets inside the support and zero outside.
inline std::vector<double> dense_kernel_solve(const Image& y, const Image& x, int m, int n,
                                              double lambda, double gamma) {
    const auto [xr, xc] = grad_brute(x);
    const auto [yr, yc] = grad_brute(y);
    const int h = x.height;
    const int w = x.width;
    const int N = h * w;
    const Eigen::MatrixXd gr = conv_matrix(xr);
    const Eigen::MatrixXd gc = conv_matrix(xc);
    Eigen::VectorXd br(N), bc(N);
    for (int i = 0; i < N; ++i) {
        br(i) = yr.data[i];
        bc(i) = yc.data[i];
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(N), v = Eigen::VectorXd::Zero(N);
    const int cm = (m - 1) / 2;
    const int cn = (n - 1) / 2;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const int idx = wrap(i - cm, h) * w + wrap(j - cn, w);
            u(idx) = i - cm;
            v(idx) = j - cn;
        }
    Eigen::MatrixXd a = gr.transpose() * gr + gc.transpose() * gc;
    a.diagonal().array() += lambda;
    a += gamma * (u * u.transpose() + v * v.transpose());
    const Eigen::VectorXd rhs = gr.transpose() * br + gc.transpose() * bc;
    const Eigen::VectorXd full = a.ldlt().solve(rhs);
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[i * n + j] = full(wrap(i - cm, h) * w + wrap(j - cn, w));
    return out;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Loop evaluation of sum_s (||y - h*x||^2 + lambda_x sum sqrt(dr^2 + dc^2 + eps^2)).
inline double loss_loop(const std::vector<Image>& xs, const std::vector<Kernel>& hs,
                        const std::vector<Image>& ys, double lambda_x, double eps) {
    double total = 0.0;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        const Image bx = conv_brute(xs[s], hs[s]);
        for (std::size_t i = 0; i < bx.size(); ++i) {
            const double d = ys[s].data[i] - bx.data[i];
            total += d * d;
        }
        const Image& x = xs[s];
        for (int ch = 0; ch < x.channels; ++ch)
            for (int r = 0; r < x.height; ++r)
                for (int c = 0; c < x.width; ++c) {
                    const double dr = x.at(wrap(r + 1, x.height), c, ch) - x.at(r, c, ch);
                    const double dc = x.at(r, wrap(c + 1, x.width), ch) - x.at(r, c, ch);
                    total += lambda_x * std::sqrt(dr * dr + dc * dc + eps * eps);
                }
    }
    return total;
}

inline double psnr_loop(const Image& a, const Image& b) {
    long double acc = 0.0L;
    for (int ch = 0; ch < a.channels; ++ch)
        for (int r = 0; r < a.height; ++r)
            for (int c = 0; c < a.width; ++c) {
                const long double d = a.at(r, c, ch) - b.at(r, c, ch);
                acc += d * d;
            }
    const long double mse = acc / (a.height * a.width * a.channels);
    return static_cast<double>(-10.0L * std::log10(mse));
}

/// Sliding-window SSIM computed with two-pass (centered) window moments.
inline double ssim_reference(const Image& a, const Image& b) {
    const int n = 11;
    const double sigma = 1.5;
    std::vector<double> g1(n);
    double s1 = 0.0;
    for (int i = 0; i < n; ++i) {
        g1[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (sigma * sigma));
        s1 += g1[i];
    }
    for (auto& v : g1) v /= s1;  // separable: w(i,j) = g1[i] g1[j]
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        double acc = 0.0;
        int count = 0;
        for (int r = 0; r + n <= a.height; ++r)
            for (int c = 0; c + n <= a.width; ++c) {
                double ma = 0, mb = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        ma += g1[i] * g1[j] * a.at(r + i, c + j, ch);
                        mb += g1[i] * g1[j] * b.at(r + i, c + j, ch);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double da = a.at(r + i, c + j, ch) - ma;
                        const double db = b.at(r + i, c + j, ch) - mb;
                        va += g1[i] * g1[j] * da * da;
                        vb += g1[i] * g1[j] * db * db;
                        cov += g1[i] * g1[j] * da * db;
                    }
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        total += acc / count;
    }
    return total / a.channels;
}

/// Normalized cross-correlation of two equally sized kernels.
inline double kernel_ncc(const Kernel& a, const Kernel& b) {
    const double n = static_cast<double>(a.weights.size());
    const double ma = a.sum() / n, mb = b.sum() / n;
    double s = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        const double x = a.weights[i] - ma, y = b.weights[i] - mb;
        s += x * y;
        sa += x * x;
        sb += y * y;
    }
    return s / std::sqrt(sa * sb);
}

}  // namespace oracle
