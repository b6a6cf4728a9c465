#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfdeblur/image.hpp"
#include "selfdeblur/imgmath.hpp"

namespace selfdeblur {

namespace detail {

// Bilinear splat of unit mass at offset (r, c) from the kernel center.
inline void splat(Kernel& k, double r, double c, double mass) {
    const double rr = r + k.center_row();
    const double cc = c + k.center_col();
    const int r0 = static_cast<int>(std::floor(rr));
    const int c0 = static_cast<int>(std::floor(cc));
    const double fr = rr - r0;
    const double fc = cc - c0;
    const double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
    const int rs[4] = {r0, r0, r0 + 1, r0 + 1};
    const int cs[4] = {c0, c0 + 1, c0, c0 + 1};
    for (int i = 0; i < 4; ++i) {
        if (wts[i] == 0.0) continue;
        if (rs[i] < 0 || rs[i] >= k.rows || cs[i] < 0 || cs[i] >= k.cols) {
            throw std::logic_error("splat: sample outside kernel support");
        }
        k.at(rs[i], cs[i]) += mass * wts[i];
    }
}

inline Kernel normalized(Kernel k) {
    const double s = k.sum();
    for (auto& w : k.weights) w /= s;
    return k;
}

}  // namespace detail

/// Linear motion blur: a segment of `length` pixels along `angle_deg`
/// (counter-clockwise from the column axis), integrated into the pixel it
/// passes through. Support is odd_ceil(length).
inline Kernel motion_kernel(double length, double angle_deg) {
    if (!(length >= 1.0)) throw std::invalid_argument("motion_kernel: length must be >= 1");
    const int size = odd_ceil(length, 1);
    Kernel k(size, size);
    const double th = angle_deg * std::numbers::pi / 180.0;
    const double dc = std::cos(th);
    const double dr = -std::sin(th);
    const int samples = static_cast<int>(std::ceil(length * 64));
    for (int i = 0; i < samples; ++i) {
        const double t = length * ((i + 0.5) / samples - 0.5);
        const int r = k.center_row() + static_cast<int>(std::lround(t * dr));
        const int c = k.center_col() + static_cast<int>(std::lround(t * dc));
        k.at(r, c) += 1.0;
    }
    return detail::normalized(std::move(k));
}

inline Kernel gaussian_kernel(double sigma, int size) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    Kernel k(size, size);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double dr = r - k.center_row();
            const double dc = c - k.center_col();
            k.at(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    }
    return detail::normalized(std::move(k));
}

/// Camera-shake style kernel from a smoothed random walk of `steps` unit
/// moves, recentered on its centroid.
inline Kernel random_walk_kernel(int steps, std::uint64_t seed) {
    if (steps < 1) throw std::invalid_argument("random_walk_kernel: steps must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> turn(0.0, 0.6);
    std::uniform_real_distribution<double> start(0.0, 2.0 * std::numbers::pi);
    std::vector<double> pr{0.0};
    std::vector<double> pc{0.0};
    double heading = start(rng);
    for (int i = 0; i < steps; ++i) {
        heading += turn(rng);
        pr.push_back(pr.back() - std::sin(heading));
        pc.push_back(pc.back() + std::cos(heading));
    }
    double mr = 0.0;
    double mc = 0.0;
    for (std::size_t i = 0; i < pr.size(); ++i) {
        mr += pr[i];
        mc += pc[i];
    }
    mr /= static_cast<double>(pr.size());
    mc /= static_cast<double>(pc.size());
    double extent = 0.0;
    for (std::size_t i = 0; i < pr.size(); ++i) {
        pr[i] -= mr;
        pc[i] -= mc;
        extent = std::max({extent, std::abs(pr[i]), std::abs(pc[i])});
    }
    const int size = 2 * static_cast<int>(std::ceil(extent)) + 3;
    Kernel k(size, size);
    // Sample each segment densely so the trace is continuous.
    for (std::size_t i = 0; i + 1 < pr.size(); ++i) {
        for (int j = 0; j < 8; ++j) {
            const double t = j / 8.0;
            detail::splat(k, pr[i] + t * (pr[i + 1] - pr[i]), pc[i] + t * (pc[i + 1] - pc[i]), 1.0);
        }
    }
    detail::splat(k, pr.back(), pc.back(), 1.0);
    return detail::normalized(std::move(k));
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`, then clips to [0,1].
inline Image add_gaussian_noise(Image img, double sigma, std::uint64_t seed) {
    if (sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, sigma);
        for (auto& v : img.data) v += n(rng);
    }
    return clamp01(std::move(img));
}

/// Eq.-style blur formation: clip(h * x + n).
inline Image synthesize_blur(const Image& sharp, const Kernel& k, double noise_sigma,
                             std::uint64_t seed) {
    return add_gaussian_noise(conv_circular(sharp, k), noise_sigma, seed);
}

/// Piecewise-constant scene of rectangles and discs over a smooth
/// background; deterministic in `seed`.
inline Image make_test_scene(int height, int width, int channels, std::uint64_t seed) {
    Image img(height, width, channels);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> base(channels);
    for (auto& b : base) b = 0.3 + 0.3 * u(rng);
    for (int ch = 0; ch < channels; ++ch)
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                img.at(r, c, ch) = base[ch] + 0.15 * (static_cast<double>(r) / height - 0.5);

    const int shapes = 6 + static_cast<int>(height * width / 512);
    for (int s = 0; s < shapes; ++s) {
        std::vector<double> color(channels);
        for (auto& v : color) v = 0.05 + 0.9 * u(rng);
        const double cr = u(rng) * height;
        const double cc = u(rng) * width;
        const double size = (0.08 + 0.2 * u(rng)) * std::min(height, width);
        const bool disc = u(rng) < 0.5;
        for (int r = 0; r < height; ++r) {
            for (int c = 0; c < width; ++c) {
                const double dr = r - cr;
                const double dc = c - cc;
                const bool inside = disc ? dr * dr + dc * dc <= size * size
                                         : std::abs(dr) <= size && std::abs(dc) <= 0.6 * size;
                if (inside)
                    for (int ch = 0; ch < channels; ++ch) img.at(r, c, ch) = color[ch];
            }
        }
    }
    return clamp01(std::move(img));
}

}  // namespace selfdeblur
