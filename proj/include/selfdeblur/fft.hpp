#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include <fftw3.h>

namespace selfdeblur {

using cplx = std::complex<double>;
using Spectrum = std::vector<cplx>;

namespace detail {

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Plans are created with FFTW_UNALIGNED so they can be re-executed on any
// buffer through the new-array interface, which is thread safe.
inline fftw_plan plan_for(int h, int w, int sign) {
    thread_local std::map<std::pair<std::pair<int, int>, int>, PlanHandle> cache;
    auto key = std::make_pair(std::make_pair(h, w), sign);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second.get();

    std::vector<cplx> scratch(static_cast<std::size_t>(h) * w);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        p = fftw_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    auto [pos, _] = cache.emplace(key, PlanHandle(p));
    return pos->second.get();
}

}  // namespace detail

/// Unnormalized forward 2-D DFT of a real h x w array.
inline Spectrum fft2(const double* src, int h, int w) {
    Spectrum out(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cplx(src[i], 0.0);
    auto* buf = reinterpret_cast<fftw_complex*>(out.data());
    fftw_execute_dft(detail::plan_for(h, w, FFTW_FORWARD), buf, buf);
    return out;
}

inline Spectrum fft2(const std::vector<double>& src, int h, int w) {
    return fft2(src.data(), h, w);
}

/// Inverse 2-D DFT scaled by 1/(h*w), returning the real part. The
/// largest discarded imaginary magnitude is written to `imag_residue`.
inline std::vector<double> ifft2_real(Spectrum spec, int h, int w,
                                      double* imag_residue = nullptr) {
    auto* buf = reinterpret_cast<fftw_complex*>(spec.data());
    fftw_execute_dft(detail::plan_for(h, w, FFTW_BACKWARD), buf, buf);
    const double scale = 1.0 / (static_cast<double>(h) * w);
    std::vector<double> out(spec.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        out[i] = spec[i].real() * scale;
        worst = std::max(worst, std::abs(spec[i].imag() * scale));
    }
    if (imag_residue) *imag_residue = worst;
    return out;
}

}  // namespace selfdeblur
