#pragma once

#include "s2m/fft.hpp"
#include "s2m/tensor.hpp"

#include <algorithm>
#include <cstddef>

namespace s2m {

/// Learnable complex filter over the centered k x k low-frequency window of
/// each channel. Real and imaginary parts are independent real parameters of
/// shape [k, k, C].
struct SpectralFilter {
    std::size_t k = 0;
    std::size_t channels = 0;
    Tensor real;
    Tensor imag;

    /// Real part 1, imaginary part 0: an ideal low-pass at initialization.
    static SpectralFilter identity(std::size_t k, std::size_t channels, Dtype dtype = Dtype::f64);
};

/// Stage-adaptive truncation size.
inline std::size_t clamp_truncation(std::size_t k, std::size_t h, std::size_t w)
{
    return std::min({k, h, w});
}

/// Re(IFFT(ishift(pad(crop(shift(FFT(x))) * W)))) per channel for x
/// [B, C, H, W]. Differentiable with respect to x and both filter parts.
/// Throws ConfigError when filter.k > min(H, W).
Tensor spectral_branch(const Tensor& x, const SpectralFilter& filter);

struct SpectrumStats {
    double total_energy = 0.0;
    double retained_energy = 0.0;
    double retention_ratio = 0.0;  // retained / (total + 1e-12)
    std::size_t k = 0;
};

/// Squared-magnitude spectral energy of every plane of x (last two axes
/// spatial), total and inside the centered k x k window.
SpectrumStats energy_retention(const Tensor& x, std::size_t k);

} // namespace s2m
