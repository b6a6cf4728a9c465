#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfdeblur {

/// Planar floating-point raster. Samples are stored channel by channel,
/// each plane row-major, so plane `c` starts at `c * height * width`.
/// Nominal range is [0,1]; intermediate results may leave it.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c = 1, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || c <= 0) {
            throw std::invalid_argument("Image: dimensions must be positive");
        }
    }

    [[nodiscard]] std::size_t plane_size() const {
        return static_cast<std::size_t>(height) * width;
    }
    [[nodiscard]] std::size_t size() const { return data.size(); }

    double& at(int r, int c, int ch = 0) {
        return data[ch * plane_size() + static_cast<std::size_t>(r) * width + c];
    }
    [[nodiscard]] double at(int r, int c, int ch = 0) const {
        return data[ch * plane_size() + static_cast<std::size_t>(r) * width + c];
    }

    double* plane(int ch) { return data.data() + ch * plane_size(); }
    [[nodiscard]] const double* plane(int ch) const {
        return data.data() + ch * plane_size();
    }

    [[nodiscard]] bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    [[nodiscard]] bool all_finite() const {
        return std::all_of(data.begin(), data.end(),
                           [](double v) { return std::isfinite(v); });
    }
};

/// Copy of a single channel as a one-channel image.
inline Image extract_channel(const Image& img, int ch) {
    if (ch < 0 || ch >= img.channels) {
        throw std::out_of_range("extract_channel: channel index");
    }
    Image out(img.height, img.width, 1);
    std::copy_n(img.plane(ch), img.plane_size(), out.data.begin());
    return out;
}

/// Luminance with fixed Rec.601 weights; single-channel input is returned as is.
inline Image luminance(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) {
        throw std::invalid_argument("luminance: expected 1 or 3 channels");
    }
    Image out(img.height, img.width, 1);
    const double* r = img.plane(0);
    const double* g = img.plane(1);
    const double* b = img.plane(2);
    for (std::size_t i = 0; i < img.plane_size(); ++i) {
        out.data[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    }
    return out;
}

inline Image clamp01(Image img) {
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

/// Small 2-D point-spread function. Rows and cols are odd so the
/// coordinate center ((rows-1)/2, (cols-1)/2) falls on a sample.
struct Kernel {
    int rows = 0;
    int cols = 0;
    std::vector<double> weights;

    Kernel() = default;
    Kernel(int m, int n, double fill = 0.0)
        : rows(m), cols(n), weights(static_cast<std::size_t>(m) * n, fill) {
        if (m <= 0 || n <= 0 || m % 2 == 0 || n % 2 == 0) {
            throw std::invalid_argument("Kernel: dimensions must be positive and odd");
        }
    }

    double& at(int r, int c) { return weights[static_cast<std::size_t>(r) * cols + c]; }
    [[nodiscard]] double at(int r, int c) const {
        return weights[static_cast<std::size_t>(r) * cols + c];
    }

    [[nodiscard]] int center_row() const { return (rows - 1) / 2; }
    [[nodiscard]] int center_col() const { return (cols - 1) / 2; }

    [[nodiscard]] double sum() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }

    static Kernel delta(int m, int n) {
        Kernel k(m, n);
        k.at(k.center_row(), k.center_col()) = 1.0;
        return k;
    }

    /// Nonnegative with unit sum (tolerance 1e-6).
    [[nodiscard]] bool is_normalized(double tol = 1e-6) const {
        return std::all_of(weights.begin(), weights.end(),
                           [](double w) { return w >= 0.0 && std::isfinite(w); }) &&
               std::abs(sum() - 1.0) <= tol;
    }
};

/// Nearest odd integer >= v, clamped below at `min_size`.
inline int odd_ceil(double v, int min_size = 3) {
    int n = static_cast<int>(std::ceil(v - 1e-12));
    if (n % 2 == 0) ++n;
    return std::max(n, min_size);
}

}  // namespace selfdeblur
