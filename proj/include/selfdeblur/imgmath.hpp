#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selfdeblur/fft.hpp"
#include "selfdeblur/image.hpp"

namespace selfdeblur {

// ---------------------------------------------------------------------------
// Pyramid
// ---------------------------------------------------------------------------

struct KernelSize {
    int rows = 0;
    int cols = 0;
};

struct Pyramid {
    std::vector<Image> levels;
    std::vector<KernelSize> kernel_sizes;  // empty unless assigned

    [[nodiscard]] int scales() const { return static_cast<int>(levels.size()); }
};

inline int ceil_half(int n) { return (n + 1) / 2; }

/// Dimension of scale `s` along one axis: ceil(n / 2^s).
inline int scaled_dim(int n, int s) {
    for (int i = 0; i < s; ++i) n = ceil_half(n);
    return n;
}

/// 2x2 box average with ceil-halving; at odd borders only the samples that
/// exist are averaged.
inline Image downsample2(const Image& img) {
    const int oh = ceil_half(img.height);
    const int ow = ceil_half(img.width);
    Image out(oh, ow, img.channels);
    for (int ch = 0; ch < img.channels; ++ch) {
        for (int r = 0; r < oh; ++r) {
            for (int c = 0; c < ow; ++c) {
                double acc = 0.0;
                int count = 0;
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        const int rr = 2 * r + dr;
                        const int cc = 2 * c + dc;
                        if (rr < img.height && cc < img.width) {
                            acc += img.at(rr, cc, ch);
                            ++count;
                        }
                    }
                }
                out.at(r, c, ch) = acc / count;
            }
        }
    }
    return out;
}

/// Repeated box-average pyramid. Level 0 is a copy of `img`. Throws if the
/// coarsest level would have a side shorter than `min_side`.
inline Pyramid build_pyramid(const Image& img, int scales, int min_side = 1) {
    if (scales < 1) throw std::invalid_argument("build_pyramid: scales must be >= 1");
    const int coarse_h = scaled_dim(img.height, scales - 1);
    const int coarse_w = scaled_dim(img.width, scales - 1);
    if (std::min(coarse_h, coarse_w) < min_side) {
        throw std::invalid_argument("build_pyramid: coarsest level " +
                                    std::to_string(coarse_h) + "x" + std::to_string(coarse_w) +
                                    " is below the minimum side " + std::to_string(min_side));
    }
    Pyramid p;
    p.levels.reserve(scales);
    p.levels.push_back(img);
    for (int s = 1; s < scales; ++s) p.levels.push_back(downsample2(p.levels.back()));
    return p;
}

/// Kernel support at scale s: nearest odd integer >= size / 2^s, at least 3
/// (or the base size itself when that is already smaller).
inline KernelSize kernel_size_at_scale(KernelSize base, int s) {
    const double f = std::ldexp(1.0, -s);
    return {s == 0 ? base.rows : odd_ceil(base.rows * f, std::min(3, base.rows)),
            s == 0 ? base.cols : odd_ceil(base.cols * f, std::min(3, base.cols))};
}

inline void assign_kernel_sizes(Pyramid& p, KernelSize base) {
    p.kernel_sizes.clear();
    for (int s = 0; s < p.scales(); ++s) p.kernel_sizes.push_back(kernel_size_at_scale(base, s));
}

// ---------------------------------------------------------------------------
// Gradients (forward differences, circular wrap)
// ---------------------------------------------------------------------------

struct Gradient {
    Image rows;  // d/dr
    Image cols;  // d/dc
};

inline Gradient grad(const Image& img) {
    if (img.channels != 1) throw std::invalid_argument("grad: single-channel image required");
    const int h = img.height;
    const int w = img.width;
    Gradient g{Image(h, w), Image(h, w)};
    for (int r = 0; r < h; ++r) {
        const int rn = (r + 1) % h;
        for (int c = 0; c < w; ++c) {
            const int cn = (c + 1) % w;
            g.rows.at(r, c) = img.at(rn, c) - img.at(r, c);
            g.cols.at(r, c) = img.at(r, cn) - img.at(r, c);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Circular convolution
// ---------------------------------------------------------------------------

/// Places an m x n map of offsets [-(m-1)/2, (m-1)/2] x [-(n-1)/2, (n-1)/2]
/// into an h x w plane so that offset (0,0) sits at index (0,0).
inline std::vector<double> embed_centered(const std::vector<double>& small, int m, int n,
                                          int h, int w) {
    if (m > h || n > w) throw std::invalid_argument("embed_centered: map larger than plane");
    std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
    const int cm = (m - 1) / 2;
    const int cn = (n - 1) / 2;
    for (int i = 0; i < m; ++i) {
        const int r = ((i - cm) % h + h) % h;
        for (int j = 0; j < n; ++j) {
            const int c = ((j - cn) % w + w) % w;
            out[static_cast<std::size_t>(r) * w + c] += small[static_cast<std::size_t>(i) * n + j];
        }
    }
    return out;
}

/// Inverse of embed_centered: reads the m x n window of offsets around index
/// (0,0), wrapping modulo the plane size.
inline std::vector<double> crop_centered(const std::vector<double>& plane, int h, int w, int m,
                                         int n) {
    if (m > h || n > w) throw std::invalid_argument("crop_centered: window larger than plane");
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    const int cm = (m - 1) / 2;
    const int cn = (n - 1) / 2;
    for (int i = 0; i < m; ++i) {
        const int r = ((i - cm) % h + h) % h;
        for (int j = 0; j < n; ++j) {
            const int c = ((j - cn) % w + w) % w;
            out[static_cast<std::size_t>(i) * n + j] = plane[static_cast<std::size_t>(r) * w + c];
        }
    }
    return out;
}

inline Spectrum kernel_spectrum(const Kernel& ker, int h, int w) {
    if (ker.rows > h || ker.cols > w) {
        throw std::invalid_argument("conv_circular: kernel larger than image");
    }
    return fft2(embed_centered(ker.weights, ker.rows, ker.cols, h, w), h, w);
}

namespace detail {

inline Image spectral_filter(const Image& img, const Spectrum& kspec, bool conjugate) {
    Image out(img.height, img.width, img.channels);
    for (int ch = 0; ch < img.channels; ++ch) {
        Spectrum s = fft2(img.plane(ch), img.height, img.width);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] *= conjugate ? std::conj(kspec[i]) : kspec[i];
        }
        auto plane = ifft2_real(std::move(s), img.height, img.width);
        std::copy(plane.begin(), plane.end(), out.plane(ch));
    }
    return out;
}

}  // namespace detail

/// Periodic convolution (img * ker)(p) = sum_q ker(q) img(p - q), where q
/// ranges over kernel offsets relative to its center. Computed via FFT.
inline Image conv_circular(const Image& img, const Kernel& ker) {
    return detail::spectral_filter(img, kernel_spectrum(ker, img.height, img.width), false);
}

/// Adjoint of conv_circular: sum_q ker(q) img(p + q).
inline Image correlate_circular(const Image& img, const Kernel& ker) {
    return detail::spectral_filter(img, kernel_spectrum(ker, img.height, img.width), true);
}

// ---------------------------------------------------------------------------
// Salient edge selection
// ---------------------------------------------------------------------------

enum class EdgeOrientation { Horizontal = 0, Vertical = 1, Diag45 = 2, DiagMinus45 = 3 };

struct EdgeMask {
    int height = 0;
    int width = 0;
    /// Indexed by EdgeOrientation.
    std::array<std::vector<bool>, 4> directional;
    std::vector<bool> combined;
    std::array<double, 4> thresholds{};
    /// Every filter response was zero; each map then selects all pixels.
    bool degenerate = false;

    [[nodiscard]] std::size_t count(EdgeOrientation o) const {
        const auto& m = directional[static_cast<int>(o)];
        return static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
    }
};

/// 3x3 Sobel masks for the four orientations. "Horizontal" differentiates
/// along columns, so it responds to vertical step edges.
inline const std::array<std::array<double, 9>, 4>& sobel_masks() {
    static const std::array<std::array<double, 9>, 4> masks{{
        {-1, 0, 1, -2, 0, 2, -1, 0, 1},
        {-1, -2, -1, 0, 0, 0, 1, 2, 1},
        {0, 1, 2, -1, 0, 1, -2, -1, 0},
        {-2, -1, 0, -1, 0, 1, 0, 1, 2},
    }};
    return masks;
}

/// Absolute Sobel response with replicated borders. Taken relative to the
/// center sample so flat regions give exactly zero.
inline std::vector<double> sobel_response(const Image& img, EdgeOrientation o) {
    const auto& k = sobel_masks()[static_cast<int>(o)];
    const int h = img.height;
    const int w = img.width;
    std::vector<double> out(img.plane_size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double center = img.at(r, c);
            double acc = 0.0;
            for (int dr = -1; dr <= 1; ++dr) {
                const int rr = std::clamp(r + dr, 0, h - 1);
                for (int dc = -1; dc <= 1; ++dc) {
                    const int cc = std::clamp(c + dc, 0, w - 1);
                    acc += k[(dr + 1) * 3 + (dc + 1)] * (img.at(rr, cc) - center);
                }
            }
            out[static_cast<std::size_t>(r) * w + c] = std::abs(acc);
        }
    }
    return out;
}

/// Keeps at least `keep_fraction` of the pixels with the largest response in
/// each orientation; ties at the threshold are kept.
inline EdgeMask select_edges(const Image& img, double keep_fraction = 0.10) {
    if (img.channels != 1) throw std::invalid_argument("select_edges: single-channel image required");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw std::invalid_argument("select_edges: keep_fraction must be in (0, 1]");
    }
    const std::size_t n = img.plane_size();
    const auto keep = static_cast<std::size_t>(
        std::clamp<double>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9), 1.0,
                           static_cast<double>(n)));

    EdgeMask mask;
    mask.height = img.height;
    mask.width = img.width;
    mask.combined.assign(n, false);
    double max_response = 0.0;
    for (int o = 0; o < 4; ++o) {
        const auto resp = sobel_response(img, static_cast<EdgeOrientation>(o));
        auto sorted = resp;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1),
                         sorted.end(), std::greater<>());
        const double threshold = sorted[keep - 1];
        mask.thresholds[o] = threshold;
        auto& dir = mask.directional[o];
        dir.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            dir[i] = resp[i] >= threshold;
            if (dir[i]) mask.combined[i] = true;
            max_response = std::max(max_response, resp[i]);
        }
    }
    mask.degenerate = max_response == 0.0;
    return mask;
}

}  // namespace selfdeblur
