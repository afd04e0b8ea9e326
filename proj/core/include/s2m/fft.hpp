#pragma once

#include "s2m/tensor.hpp"

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace s2m {

/// Complex array; the last two axes are (H, W), leading axes index independent planes.
struct ComplexTensor {
    Shape shape;
    std::vector<double> real;
    std::vector<double> imag;

    static ComplexTensor zeros(Shape shape);
    std::size_t numel() const { return real.size(); }
    std::size_t height() const { return shape.at(shape.size() - 2); }
    std::size_t width() const { return shape.at(shape.size() - 1); }
    std::size_t planes() const { return numel() / (height() * width()); }
    std::complex<double> at(std::size_t i) const { return {real[i], imag[i]}; }
};

/// In-place 1-D DFT of any length: radix-2 for powers of two, Bluestein's
/// chirp-z otherwise. Unnormalized in both directions; the inverse uses the
/// conjugate kernel exp(+2 pi i kn / n).
void fft1d(std::span<std::complex<double>> data, bool inverse);

/// In-place unnormalized 2-D DFT of one row-major H x W plane.
void fft2d_plane(std::span<std::complex<double>> plane, std::size_t h, std::size_t w, bool inverse);

/// Unnormalized forward DFT over the last two axes of a real tensor.
ComplexTensor fft2d(const Tensor& x);
/// Forward DFT of complex data.
ComplexTensor fft2d(const ComplexTensor& x);
/// Inverse DFT scaled by 1/(HW), so ifft2d(fft2d(x)) recovers x.
ComplexTensor ifft2d(const ComplexTensor& x);

enum class ShiftDirection { forward, inverse };

/// Forward moves the zero-frequency bin of each plane to (H/2, W/2) (integer
/// division); inverse undoes it for every parity.
ComplexTensor center_shift(const ComplexTensor& x, ShiftDirection direction);

/// Centered k x k window of a center-shifted spectrum: rows and columns
/// [c - k/2, c - k/2 + k) with c = n/2. Throws ConfigError if k > min(H, W).
ComplexTensor crop_center(const ComplexTensor& x, std::size_t k);

/// Places a k x k block at the center of a zero H x W plane, the inverse
/// placement of crop_center.
ComplexTensor pad_center(const ComplexTensor& block, std::size_t h, std::size_t w);

/// Unshifted frequency index held at position `pos` of a centered k-window
/// over an axis of length n.
inline std::size_t window_frequency(std::size_t pos, std::size_t k, std::size_t n)
{
    return (pos + n - k / 2) % n;
}

} // namespace s2m
