#include "s2m/fft.hpp"

#include "s2m/error.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>

namespace s2m {

namespace {

using cd = std::complex<double>;

/// Plain complex product; operator* on std::complex calls a NaN-recovering libcall.
inline cd cmul(cd a, cd b) { return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()}; }

struct Radix2Plan {
    std::size_t n = 0;
    std::vector<std::size_t> bitrev;
    std::vector<cd> twiddle;  // exp(-2 pi i k / n), k < n/2

    explicit Radix2Plan(std::size_t size) : n(size), bitrev(size), twiddle(size / 2)
    {
        const int bits = std::countr_zero(size);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
            bitrev[i] = r;
        }
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddle[k] = {std::cos(a), std::sin(a)};
        }
    }

    void run(cd* data, bool inverse) const
    {
        for (std::size_t i = 0; i < n; ++i) {
            if (i < bitrev[i]) std::swap(data[i], data[bitrev[i]]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t step = n / len;
            for (std::size_t start = 0; start < n; start += len) {
                for (std::size_t j = 0; j < half; ++j) {
                    cd w = twiddle[j * step];
                    if (inverse) w = std::conj(w);
                    const cd u = data[start + j];
                    const cd v = cmul(data[start + j + half], w);
                    data[start + j] = u + v;
                    data[start + j + half] = u - v;
                }
            }
        }
    }
};

struct BluesteinPlan {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<cd> chirp;          // exp(-i pi k^2 / n)
    std::vector<cd> filter_fwd;     // FFT of conj(chirp) sequence, forward direction
    std::vector<cd> filter_inv;     // same for the inverse direction
    std::shared_ptr<const Radix2Plan> inner;

    BluesteinPlan(std::size_t size, std::shared_ptr<const Radix2Plan> radix2)
        : n(size), m(radix2->n), chirp(size), inner(std::move(radix2))
    {
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the angle argument small.
            const std::size_t k2 = (k * k) % (2 * n);
            const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
            chirp[k] = {std::cos(a), std::sin(a)};
        }
        filter_fwd = make_filter(false);
        filter_inv = make_filter(true);
    }

    std::vector<cd> make_filter(bool inverse) const
    {
        std::vector<cd> b(m, cd{});
        for (std::size_t k = 0; k < n; ++k) {
            const cd c = inverse ? chirp[k] : std::conj(chirp[k]);
            b[k] = c;
            if (k != 0) b[m - k] = c;
        }
        inner->run(b.data(), false);
        return b;
    }

    void run(cd* data, bool inverse) const
    {
        std::vector<cd> a(m, cd{});
        for (std::size_t k = 0; k < n; ++k) a[k] = cmul(data[k], inverse ? std::conj(chirp[k]) : chirp[k]);
        inner->run(a.data(), false);
        const auto& filter = inverse ? filter_inv : filter_fwd;
        for (std::size_t k = 0; k < m; ++k) a[k] = cmul(a[k], filter[k]);
        inner->run(a.data(), true);
        const double scale = 1.0 / static_cast<double>(m);
        for (std::size_t k = 0; k < n; ++k) data[k] = cmul(a[k] * scale, inverse ? std::conj(chirp[k]) : chirp[k]);
    }
};

struct PlanCache {
    std::map<std::size_t, std::shared_ptr<const Radix2Plan>> radix2;
    std::map<std::size_t, std::shared_ptr<const BluesteinPlan>> bluestein;

    std::shared_ptr<const Radix2Plan> get_radix2(std::size_t n)
    {
        auto& slot = radix2[n];
        if (!slot) slot = std::make_shared<const Radix2Plan>(n);
        return slot;
    }

    std::shared_ptr<const BluesteinPlan> get_bluestein(std::size_t n)
    {
        auto& slot = bluestein[n];
        if (!slot) slot = std::make_shared<const BluesteinPlan>(n, get_radix2(std::bit_ceil(2 * n - 1)));
        return slot;
    }
};

PlanCache& plan_cache()
{
    thread_local PlanCache cache;
    return cache;
}

void check_planes(const Shape& shape, const char* op)
{
    if (shape.size() < 2) throw ShapeError(std::string(op) + ": need at least 2 axes, got " + shape_str(shape));
    if (shape[shape.size() - 1] == 0 || shape[shape.size() - 2] == 0) {
        throw ShapeError(std::string(op) + ": empty spatial extent " + shape_str(shape));
    }
}

} // namespace

ComplexTensor ComplexTensor::zeros(Shape shape)
{
    ComplexTensor t;
    const std::size_t n = shape_numel(shape);
    t.shape = std::move(shape);
    t.real.assign(n, 0.0);
    t.imag.assign(n, 0.0);
    return t;
}

void fft1d(std::span<std::complex<double>> data, bool inverse)
{
    const std::size_t n = data.size();
    if (n <= 1) return;
    auto& cache = plan_cache();
    if (std::has_single_bit(n)) cache.get_radix2(n)->run(data.data(), inverse);
    else cache.get_bluestein(n)->run(data.data(), inverse);
}

void fft2d_plane(std::span<std::complex<double>> plane, std::size_t h, std::size_t w, bool inverse)
{
    if (plane.size() != h * w) throw ShapeError("fft2d_plane: buffer size does not match H x W");
    for (std::size_t r = 0; r < h; ++r) fft1d(plane.subspan(r * w, w), inverse);
    std::vector<cd> column(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) column[r] = plane[r * w + c];
        fft1d(column, inverse);
        for (std::size_t r = 0; r < h; ++r) plane[r * w + c] = column[r];
    }
}

namespace {

ComplexTensor transform(const ComplexTensor& x, bool inverse)
{
    check_planes(x.shape, inverse ? "ifft2d" : "fft2d");
    ComplexTensor out = ComplexTensor::zeros(x.shape);
    const std::size_t h = x.height(), w = x.width(), hw = h * w;
    const double scale = inverse ? 1.0 / static_cast<double>(hw) : 1.0;
    std::vector<cd> plane(hw);
    for (std::size_t p = 0; p < x.planes(); ++p) {
        for (std::size_t i = 0; i < hw; ++i) plane[i] = {x.real[p * hw + i], x.imag[p * hw + i]};
        fft2d_plane(plane, h, w, inverse);
        for (std::size_t i = 0; i < hw; ++i) {
            out.real[p * hw + i] = plane[i].real() * scale;
            out.imag[p * hw + i] = plane[i].imag() * scale;
        }
    }
    return out;
}

} // namespace

ComplexTensor fft2d(const Tensor& x)
{
    ComplexTensor c = ComplexTensor::zeros(x.shape());
    auto xv = x.data();
    std::copy(xv.begin(), xv.end(), c.real.begin());
    return transform(c, false);
}

ComplexTensor fft2d(const ComplexTensor& x) { return transform(x, false); }
ComplexTensor ifft2d(const ComplexTensor& x) { return transform(x, true); }

ComplexTensor center_shift(const ComplexTensor& x, ShiftDirection direction)
{
    check_planes(x.shape, "center_shift");
    ComplexTensor out = ComplexTensor::zeros(x.shape);
    const std::size_t h = x.height(), w = x.width(), hw = h * w;
    const std::size_t sh = h / 2, sw = w / 2;
    for (std::size_t p = 0; p < x.planes(); ++p) {
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                const std::size_t shifted = ((r + sh) % h) * w + (c + sw) % w;
                const std::size_t plain = r * w + c;
                const std::size_t src = direction == ShiftDirection::forward ? plain : shifted;
                const std::size_t dst = direction == ShiftDirection::forward ? shifted : plain;
                out.real[p * hw + dst] = x.real[p * hw + src];
                out.imag[p * hw + dst] = x.imag[p * hw + src];
            }
        }
    }
    return out;
}

ComplexTensor crop_center(const ComplexTensor& x, std::size_t k)
{
    check_planes(x.shape, "crop_center");
    const std::size_t h = x.height(), w = x.width();
    if (k == 0 || k > std::min(h, w)) {
        throw ConfigError("crop_center: truncation k=" + std::to_string(k) + " exceeds spatial size " +
                          std::to_string(h) + "x" + std::to_string(w) +
                          "; use stage-adaptive truncation k = min(k, H, W)");
    }
    Shape shape = x.shape;
    shape[shape.size() - 2] = k;
    shape[shape.size() - 1] = k;
    ComplexTensor out = ComplexTensor::zeros(shape);
    const std::size_t r0 = h / 2 - k / 2, c0 = w / 2 - k / 2;
    for (std::size_t p = 0; p < x.planes(); ++p)
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) {
                const std::size_t src = p * h * w + (r0 + r) * w + c0 + c;
                out.real[(p * k + r) * k + c] = x.real[src];
                out.imag[(p * k + r) * k + c] = x.imag[src];
            }
    return out;
}

ComplexTensor pad_center(const ComplexTensor& block, std::size_t h, std::size_t w)
{
    check_planes(block.shape, "pad_center");
    const std::size_t kh = block.height(), kw = block.width();
    if (kh > h || kw > w) {
        throw ConfigError("pad_center: block " + std::to_string(kh) + "x" + std::to_string(kw) +
                          " larger than target " + std::to_string(h) + "x" + std::to_string(w));
    }
    Shape shape = block.shape;
    shape[shape.size() - 2] = h;
    shape[shape.size() - 1] = w;
    ComplexTensor out = ComplexTensor::zeros(shape);
    const std::size_t r0 = h / 2 - kh / 2, c0 = w / 2 - kw / 2;
    for (std::size_t p = 0; p < block.planes(); ++p)
        for (std::size_t r = 0; r < kh; ++r)
            for (std::size_t c = 0; c < kw; ++c) {
                const std::size_t dst = p * h * w + (r0 + r) * w + c0 + c;
                out.real[dst] = block.real[(p * kh + r) * kw + c];
                out.imag[dst] = block.imag[(p * kh + r) * kw + c];
            }
    return out;
}

} // namespace s2m
