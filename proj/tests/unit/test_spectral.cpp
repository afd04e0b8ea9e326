#include "doctest.h"

#include "helpers.hpp"

#include "s2m/error.hpp"
#include "s2m/fft.hpp"
#include "s2m/gradcheck.hpp"
#include "s2m/ops.hpp"
#include "s2m/spectral.hpp"

using namespace s2m;
using testing::random_tensor;

namespace {

SpectralFilter random_filter(std::size_t k, std::size_t c, Rng& rng)
{
    SpectralFilter f = SpectralFilter::identity(k, c);
    f.real = random_tensor({k, k, c}, rng);
    f.imag = random_tensor({k, k, c}, rng);
    return f;
}

}  // namespace

TEST_CASE("constant image has a DC-only spectrum")
{
    const double c = 0.37;
    ComplexTensor X = fft2d(Tensor::full({4, 6}, c));
    CHECK(X.real[0] == doctest::Approx(c * 24).epsilon(1e-14));
    for (std::size_t i = 1; i < X.numel(); ++i) CHECK(std::abs(X.at(i)) < 1e-12);
}

TEST_CASE("impulse at the origin has a flat unit spectrum")
{
    std::vector<double> v(5 * 7, 0.0);
    v[0] = 1.0;
    ComplexTensor X = fft2d(Tensor::from_data({5, 7}, v));
    for (std::size_t i = 0; i < X.numel(); ++i) CHECK(std::abs(X.at(i)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fft2d matches the direct DFT")
{
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {5, 6}, {7, 3}, {12, 16}}) {
        Rng rng(h * 31 + w);
        Tensor x = random_tensor({h, w}, rng);
        ComplexTensor X = fft2d(x);
        auto ref = oracle::naive_dft2(testing::grid(x));
        double err = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(X.at(i) - ref[i]));
        CHECK(err < 1e-10);
    }
}

TEST_CASE("fft1d of every length up to 40 matches the direct sum")
{
    for (std::size_t n = 1; n <= 40; ++n) {
        Rng rng(n);
        std::vector<std::complex<double>> x(n);
        for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        auto ref = oracle::naive_dft2(x, 1, n);
        fft1d(x, false);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(x[i] - ref[i]));
        CAPTURE(n);
        CHECK(err < 1e-10);
    }
}

TEST_CASE("inverse transform recovers the input")
{
    Rng rng(41);
    Tensor x = random_tensor({2, 3, 10, 6}, rng);
    ComplexTensor back = ifft2d(fft2d(x));
    CHECK(testing::max_abs_diff(back.real, testing::values(x)) < 1e-12);
    for (double v : back.imag) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("Parseval holds with the unnormalized forward transform")
{
    for (std::size_t n : {8, 11, 32}) {
        Rng rng(n);
        Tensor x = random_tensor({n, n + 3}, rng);
        double spatial = 0.0;
        for (double v : x.data()) spatial += v * v;
        const SpectrumStats s = energy_retention(x, 1);
        const double expected = double(n * (n + 3)) * spatial;
        CHECK(std::fabs(s.total_energy - expected) / s.total_energy < 1e-9);
    }
}

TEST_CASE("center shift puts DC at the middle and inverts for every parity")
{
    ComplexTensor X = fft2d(Tensor::full({4, 4}, 1.0));
    ComplexTensor S = center_shift(X, ShiftDirection::forward);
    CHECK(std::abs(S.at(2 * 4 + 2)) > 0.0);
    CHECK(std::abs(S.at(0)) == 0.0);

    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 6}, {3, 3}, {4, 7}}) {
        ComplexTensor g = ComplexTensor::zeros({h, w});
        Rng rng(h * w);
        for (std::size_t i = 0; i < g.numel(); ++i) g.real[i] = rng.uniform(), g.imag[i] = rng.uniform();
        ComplexTensor round = center_shift(center_shift(g, ShiftDirection::forward), ShiftDirection::inverse);
        CHECK(round.real == g.real);
        CHECK(round.imag == g.imag);
    }
}

TEST_CASE("center shift rotates a 3x3 index grid by one")
{
    ComplexTensor g = ComplexTensor::zeros({3, 3});
    for (std::size_t i = 0; i < 9; ++i) g.real[i] = double(i);
    ComplexTensor s = center_shift(g, ShiftDirection::forward);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t src = ((r + 3 - 1) % 3) * 3 + (c + 3 - 1) % 3;
            CHECK(s.real[r * 3 + c] == double(src));
        }
    }
}

TEST_CASE("crop selects the central window and pad inverts it")
{
    ComplexTensor g = ComplexTensor::zeros({6, 6});
    for (std::size_t i = 0; i < 36; ++i) g.real[i] = double(i);
    ComplexTensor c = crop_center(g, 2);
    CHECK(c.real == std::vector<double>{14, 15, 20, 21});

    ComplexTensor full = crop_center(g, 6);
    CHECK(full.real == g.real);

    Rng rng(7);
    ComplexTensor x = ComplexTensor::zeros({2, 9, 8});
    for (std::size_t i = 0; i < x.numel(); ++i) x.real[i] = rng.uniform(), x.imag[i] = rng.uniform();
    for (std::size_t k : {1, 3, 4, 8}) {
        ComplexTensor once = crop_center(x, k);
        ComplexTensor twice = crop_center(pad_center(once, 9, 8), k);
        CHECK(twice.real == once.real);
        CHECK(twice.imag == once.imag);
    }
    CHECK_THROWS_AS(crop_center(x, 9), ConfigError);
}

TEST_CASE("identity filter at full k is the identity map")
{
    Rng rng(8);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor y = spectral_branch(x, SpectralFilter::identity(8, 3));
    CHECK(testing::max_abs_diff(y.data(), x.data()) < 1e-10);
}

TEST_CASE("identity filter below full k is an ideal low-pass")
{
    for (auto [h, w, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{8, 8, 4}, {9, 7, 3}, {10, 10, 5}}) {
        Rng rng(h + w + k);
        Tensor x = random_tensor({1, 1, h, w}, rng);
        Tensor y = spectral_branch(x, SpectralFilter::identity(k, 1));
        oracle::Grid ref = oracle::lowpass(testing::grid(x), k);
        CHECK(testing::max_abs_diff(y.data(), ref.v) < 1e-10);
    }
}

TEST_CASE("spectral branch passes grad_check for input and filter")
{
    Rng rng(15);
    SpectralFilter f = random_filter(4, 2, rng);
    Tensor r = random_tensor({1, 2, 8, 8}, rng);
    Tensor x = random_tensor({1, 2, 8, 8}, rng);
    CHECK(grad_check([&](const Tensor& in) { return sum(mul(spectral_branch(in, f), r)); }, x) < 1e-4);

    f.real.set_requires_grad();
    f.imag.set_requires_grad();
    const auto rep = grad_check_parameters([&] { return sum(mul(spectral_branch(x, f), r)); }, {f.real, f.imag});
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("a single pixel perturbation reaches every output pixel")
{
    Rng rng(16);
    SpectralFilter f = random_filter(4, 1, rng);
    Tensor x = random_tensor({1, 1, 8, 8}, rng).set_requires_grad();
    for (std::size_t out = 0; out < 64; out += 9) {
        x.zero_grad();
        Tape tape;
        tape.backward(slice(reshape(spectral_branch(x, f), {64}), 0, out, 1));
        CHECK(std::fabs(x.grad()[63]) > 1e-12);
    }
}

TEST_CASE("energy retention edge cases")
{
    const SpectrumStats c = energy_retention(Tensor::full({16, 16}, 0.4), 1);
    CHECK(c.retention_ratio == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> v(32 * 32, 0.0);
    v[5 * 32 + 9] = 1.0;
    const SpectrumStats imp = energy_retention(Tensor::from_data({32, 32}, v), 8);
    CHECK(imp.retention_ratio == doctest::Approx(64.0 / 1024.0).epsilon(1e-10));
}

TEST_CASE("retention is non-decreasing in k")
{
    Rng rng(17);
    Tensor x = random_tensor({20, 20}, rng);
    double prev = 0.0;
    for (std::size_t k = 1; k <= 20; ++k) {
        const double r = energy_retention(x, k).retention_ratio;
        CHECK(r >= prev - 1e-15);
        prev = r;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("truncation clamps to the stage size")
{
    CHECK(clamp_truncation(32, 11, 11) == 11);
    CHECK(clamp_truncation(32, 88, 88) == 32);
    Rng rng(18);
    CHECK_THROWS_AS(spectral_branch(random_tensor({1, 1, 4, 4}, rng), SpectralFilter::identity(5, 1)), ConfigError);
}
