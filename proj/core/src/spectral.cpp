#include "s2m/spectral.hpp"

#include "s2m/error.hpp"

#include "op_support.hpp"

#include <complex>
#include <memory>

namespace s2m {

using cd = std::complex<double>;

SpectralFilter SpectralFilter::identity(std::size_t k, std::size_t channels, Dtype dtype)
{
    SpectralFilter f;
    f.k = k;
    f.channels = channels;
    f.real = Tensor::full({k, k, channels}, 1.0, dtype);
    f.imag = Tensor::zeros({k, k, channels}, dtype);
    return f;
}

Tensor spectral_branch(const Tensor& x, const SpectralFilter& filter)
{
    detail::require_rank("spectral_branch", x, 4);
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = filter.k;
    if (filter.channels != C) {
        detail::shape_error("spectral_branch", x.shape(), filter.real.shape(), "filter channel count");
    }
    const Shape wshape{K, K, C};
    if (filter.real.shape() != wshape || filter.imag.shape() != wshape) {
        detail::shape_error("spectral_branch", filter.real.shape(), filter.imag.shape(), "filter must be [k,k,C]");
    }
    if (K == 0 || K > std::min(H, W)) {
        throw ConfigError("spectral_branch: truncation k=" + std::to_string(K) + " exceeds spatial size " +
                          std::to_string(H) + "x" + std::to_string(W) +
                          "; use stage-adaptive truncation k = min(k, H, W)");
    }
    const std::size_t HW = H * W, KK = K * K;

    // Row/column frequency index of each window position.
    auto rows = std::make_shared<std::vector<std::size_t>>(K);
    auto cols = std::make_shared<std::vector<std::size_t>>(K);
    for (std::size_t u = 0; u < K; ++u) {
        (*rows)[u] = window_frequency(u, K, H);
        (*cols)[u] = window_frequency(u, K, W);
    }

    auto xv = x.data();
    auto wr = filter.real.data();
    auto wi = filter.imag.data();
    auto cropped = std::make_shared<std::vector<cd>>(B * C * KK);  // Xc kept for the backward pass
    std::vector<double> out(B * C * HW);
    std::vector<cd> plane(HW);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) plane[i] = {xv[base + i], 0.0};
            fft2d_plane(plane, H, W, false);
            cd* xc = cropped->data() + (b * C + c) * KK;
            for (std::size_t u = 0; u < K; ++u)
                for (std::size_t v = 0; v < K; ++v) xc[u * K + v] = plane[(*rows)[u] * W + (*cols)[v]];
            std::fill(plane.begin(), plane.end(), cd{});
            for (std::size_t u = 0; u < K; ++u)
                for (std::size_t v = 0; v < K; ++v) {
                    const std::size_t wk = (u * K + v) * C + c;
                    plane[(*rows)[u] * W + (*cols)[v]] = xc[u * K + v] * cd{wr[wk], wi[wk]};
                }
            fft2d_plane(plane, H, W, true);
            const double scale = 1.0 / static_cast<double>(HW);
            for (std::size_t i = 0; i < HW; ++i) out[base + i] = plane[i].real() * scale;
        }
    }

    detail::ImplPtr px = x.impl(), pr = filter.real.impl(), pi = filter.imag.impl();
    return detail::finish(
        "spectral_branch", x.shape(), std::move(out), detail::promote({&x, &filter.real, &filter.imag}), {px, pr, pi},
        [=](std::span<const double> g) {
            double* gx = detail::grad_of(px);
            double* gwr = detail::grad_of(pr);
            double* gwi = detail::grad_of(pi);
            const auto& wrv = pr->data;
            const auto& wiv = pi->data;
            std::vector<cd> buf(HW);
            std::vector<cd> gy(KK);
            const double inv_hw = 1.0 / static_cast<double>(HW);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t base = (b * C + c) * HW;
                    // Gradient w.r.t. the filtered window: gather(FFT(g)) / HW.
                    for (std::size_t i = 0; i < HW; ++i) buf[i] = {g[base + i], 0.0};
                    fft2d_plane(buf, H, W, false);
                    for (std::size_t u = 0; u < K; ++u)
                        for (std::size_t v = 0; v < K; ++v)
                            gy[u * K + v] = buf[(*rows)[u] * W + (*cols)[v]] * inv_hw;
                    const cd* xc = cropped->data() + (b * C + c) * KK;
                    if (gwr || gwi) {
                        for (std::size_t j = 0; j < KK; ++j) {
                            const cd gw = gy[j] * std::conj(xc[j]);
                            const std::size_t wk = j * C + c;
                            if (gwr) gwr[wk] += gw.real();
                            if (gwi) gwi[wk] += gw.imag();
                        }
                    }
                    if (!gx) continue;
                    // Gradient w.r.t. x: Re(HW * IFFT(scatter(gy * conj(W)))) = Re(unnormalized inverse).
                    std::fill(buf.begin(), buf.end(), cd{});
                    for (std::size_t u = 0; u < K; ++u)
                        for (std::size_t v = 0; v < K; ++v) {
                            const std::size_t j = u * K + v;
                            const std::size_t wk = j * C + c;
                            buf[(*rows)[u] * W + (*cols)[v]] = gy[j] * std::conj(cd{wrv[wk], wiv[wk]});
                        }
                    fft2d_plane(buf, H, W, true);
                    for (std::size_t i = 0; i < HW; ++i) gx[base + i] += buf[i].real();
                }
            }
        });
}

SpectrumStats energy_retention(const Tensor& x, std::size_t k)
{
    if (x.rank() < 2) detail::shape_error("energy_retention", x.shape(), "need at least 2 axes");
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    if (k == 0 || k > std::min(H, W)) {
        throw ConfigError("energy_retention: k=" + std::to_string(k) + " exceeds spatial size " + std::to_string(H) +
                          "x" + std::to_string(W));
    }
    const ComplexTensor spectrum = fft2d(x);
    SpectrumStats stats;
    stats.k = k;
    const std::size_t HW = H * W;
    for (std::size_t p = 0; p < spectrum.planes(); ++p) {
        for (std::size_t i = 0; i < HW; ++i) stats.total_energy += std::norm(spectrum.at(p * HW + i));
        for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v)
                stats.retained_energy +=
                    std::norm(spectrum.at(p * HW + window_frequency(u, k, H) * W + window_frequency(v, k, W)));
    }
    stats.retention_ratio = stats.retained_energy / (stats.total_energy + 1e-12);
    return stats;
}

} // namespace s2m
