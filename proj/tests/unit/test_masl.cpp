#include "doctest.h"

#include "helpers.hpp"

#include "s2m/data.hpp"
#include "s2m/error.hpp"
#include "s2m/gradcheck.hpp"
#include "s2m/masl.hpp"
#include "s2m/ops.hpp"

#include <numbers>

using namespace s2m;
using testing::grid;
using testing::random_mask;
using testing::random_tensor;

namespace {

Tensor disk(std::size_t n, double cx, double cy, double r)
{
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = double(j) + 0.5 - cx, dy = double(i) + 0.5 - cy;
            v[i * n + j] = dx * dx + dy * dy <= r * r ? 1.0 : 0.0;
        }
    }
    return Tensor::from_data({n, n}, v);
}

Tensor rect(std::size_t n, std::size_t top, std::size_t left, std::size_t hh, std::size_t ww)
{
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = top; i < top + hh; ++i) {
        for (std::size_t j = left; j < left + ww; ++j) v[i * n + j] = 1.0;
    }
    return Tensor::from_data({n, n}, v);
}

Tensor random_probs(std::size_t h, std::size_t w, Rng& rng) { return random_tensor({h, w}, rng, 0.02, 0.98); }

}  // namespace

TEST_CASE("morphology fixed points")
{
    Tensor ones = Tensor::full({5, 5}, 1.0);
    const Tensor dilated = morph_dilate(ones), eroded = morph_erode(ones);
    for (double v : dilated.data()) CHECK(v == 1.0);
    for (double v : eroded.data()) CHECK(v == 1.0);

    std::vector<double> v(25, 0.0);
    v[12] = 1.0;
    Tensor dot = Tensor::from_data({5, 5}, v);
    Tensor d = morph_dilate(dot);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const bool inside = i >= 1 && i <= 3 && j >= 1 && j <= 3;
            CHECK(d[i * 5 + j] == (inside ? 1.0 : 0.0));
        }
    }
    const Tensor dot_eroded = morph_erode(dot);
    for (double x : dot_eroded.data()) CHECK(x == 0.0);
}

TEST_CASE("morphology matches scalar loops on random masks")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Tensor y = random_mask(6, 6, rng);
        CHECK(testing::max_abs_diff(morph_dilate(y), oracle::dilate(grid(y)).v) == 0.0);
        CHECK(testing::max_abs_diff(morph_erode(y), oracle::erode(grid(y)).v) == 0.0);
        CHECK(testing::max_abs_diff(boundary_band(y), oracle::band(grid(y)).v) == 0.0);
    }
}

TEST_CASE("morphology rejects soft masks")
{
    CHECK_THROWS_AS(morph_erode(Tensor::full({4, 4}, 0.5)), DataError);
}

TEST_CASE("features of simple masks")
{
    const MorphFeatures full = morph_features(Tensor::full({8, 8}, 1.0));
    CHECK(full.tubularity == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(full.scale == 1.0);

    const MorphFeatures line = morph_features(rect(8, 4, 0, 1, 8));
    CHECK(line.tubularity == 0.0);
    CHECK(line.scale == 0.125);

    const MorphFeatures empty = morph_features(Tensor::zeros({8, 8}));
    CHECK(empty.tubularity == 0.0);
    CHECK(empty.compactness == 0.0);
    CHECK(empty.scale == 0.0);
    CHECK(empty.irregularity == 0.0);
}

TEST_CASE("features of a disk match the scalar oracle")
{
    Tensor y = disk(64, 32, 32, 20);
    const MorphFeatures f = morph_features(y);
    const oracle::Features ref = oracle::features(grid(y));
    CHECK(std::fabs(f.compactness - ref.c) < 0.05);
    CHECK(f.tubularity == doctest::Approx(ref.tau).epsilon(1e-12));
    CHECK(f.irregularity == doctest::Approx(ref.iota).epsilon(1e-12));
    CHECK(f.scale == doctest::Approx(ref.s).epsilon(1e-12));
}

TEST_CASE("features match the oracle on random masks")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Tensor y = random_mask(12, 10, rng, 0.3 + 0.05 * double(seed));
        const MorphFeatures f = morph_features(y);
        const oracle::Features ref = oracle::features(grid(y));
        CHECK(std::fabs(f.tubularity - ref.tau) < 1e-12);
        CHECK(std::fabs(f.compactness - ref.c) < 1e-12);
        CHECK(std::fabs(f.irregularity - ref.iota) < 1e-12);
        CHECK(std::fabs(f.scale - ref.s) < 1e-12);
    }
}

TEST_CASE("component losses vanish on a perfect prediction")
{
    Rng rng(1);
    Tensor y = random_mask(16, 16, rng);
    CHECK(loss_core(y, y).item() < 1e-6);
    CHECK(loss_boundary(y, y).item() == 0.0);
    CHECK(loss_structure(y, y).item() == 0.0);
    CHECK(loss_focal_scale(y, y).item() < 1e-6);
    CHECK(loss_texture(y, y).item() == 0.0);
}

TEST_CASE("component losses match the scalar oracle on random pairs")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 50);
        Tensor y = random_mask(8, 8, rng);
        Tensor p = random_probs(8, 8, rng);
        const auto gy = grid(y), gp = grid(p);
        CHECK(std::fabs(loss_core(y, p).item() - oracle::loss_core(gy, gp)) < 1e-9);
        CHECK(std::fabs(loss_boundary(y, p).item() - oracle::loss_boundary(gy, gp)) < 1e-9);
        CHECK(std::fabs(loss_structure(y, p).item() - oracle::loss_structure(gy, gp)) < 1e-9);
        CHECK(std::fabs(loss_focal_scale(y, p).item() - oracle::loss_focal(gy, gp)) < 1e-9);
        CHECK(std::fabs(loss_texture(y, p).item() - oracle::loss_texture(gy, gp)) < 1e-9);
    }
}

TEST_CASE("complementary prediction saturates Dice and IoU")
{
    Tensor y = disk(16, 8, 8, 5);
    Tensor p = rsub_scalar(1.0, y);
    const double core = loss_core(y, p).item();
    CHECK(core == doctest::Approx(oracle::loss_core(grid(y), grid(p))).epsilon(1e-12));
    CHECK(core > 0.7);
}

TEST_CASE("boundary loss ignores constant offsets, texture ignores ramps")
{
    Rng rng(2);
    Tensor y = random_mask(8, 8, rng);
    CHECK(loss_boundary(y, add_scalar(mul_scalar(y, 0.5), 0.25)).item() > 0.0);
    CHECK(loss_boundary(Tensor::full({8, 8}, 0.0), Tensor::full({8, 8}, 0.3)).item() == 0.0);

    std::vector<double> ramp(64);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) ramp[i * 8 + j] = 0.05 * double(i) + 0.03 * double(j);
    }
    CHECK(loss_texture(Tensor::zeros({8, 8}), Tensor::from_data({8, 8}, ramp)).item() < 1e-15);
}

TEST_CASE("structure loss of empty masks and of a square against a thin strip")
{
    CHECK(loss_structure(Tensor::zeros({8, 8}), Tensor::zeros({8, 8})).item() == 0.0);
    Tensor square = rect(16, 4, 4, 4, 4);
    Tensor strip = rect(16, 7, 0, 1, 16);
    const double v = loss_structure(square, strip).item();
    CHECK(v > 0.0);
    CHECK(v == doctest::Approx(oracle::loss_structure(grid(square), grid(strip))).epsilon(1e-12));
}

TEST_CASE("focusing exponent bins")
{
    CHECK(focal_gamma(0.01) == 3.0);
    CHECK(focal_gamma(0.1) == 2.0);
    CHECK(focal_gamma(0.5) == 1.5);
    CHECK(focal_gamma(0.05) == 2.0);
    CHECK(focal_gamma(0.2) == 1.5);
}

TEST_CASE("modulation substitutions")
{
    auto a = modulation({.tubularity = 0, .compactness = 1, .irregularity = 0});
    CHECK(a == std::array<double, 5>{1.5, 2.0, 1.0, 1.0, 1.0});
    a = modulation({.tubularity = 1, .compactness = 0, .irregularity = 0});
    CHECK(a == std::array<double, 5>{1.0, 2.5, 2.0, 1.0, 1.0});
    a = modulation({});
    CHECK(a == std::array<double, 5>{1, 1, 1, 1, 1});
}

TEST_CASE("modulation is monotone on a feature grid")
{
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            const double t = i / 10.0, c = j / 10.0;
            const auto a = modulation({.tubularity = t, .compactness = c, .irregularity = t});
            const auto at = modulation({.tubularity = t + 0.1, .compactness = c, .irregularity = t + 0.1});
            const auto ac = modulation({.tubularity = t, .compactness = c + 0.1, .irregularity = t});
            CHECK(at[1] >= a[1]);
            CHECK(ac[1] >= a[1]);
            CHECK(at[3] >= a[3]);
            CHECK(at[4] >= a[4]);
        }
    }
}

TEST_CASE("weight projection")
{
    auto w = clip_weights(MaslWeights::from({20, 0.05, 1.0, 10, 0.1})).array();
    CHECK(w == std::array<double, 5>{10.0, 0.1, 1.0, 10.0, 0.1});
    CHECK(clip_weights(MaslWeights::from(w)).array() == w);
    MaslWeights inplace = MaslWeights::from({-3, 4, 11, 0.2, 7});
    clip_weights_inplace(inplace);
    CHECK(inplace.array() == std::array<double, 5>{0.1, 4, 10, 0.2, 7});
}

TEST_CASE("total matches the oracle and vanishes on perfect predictions")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 200);
        Tensor y = random_mask(16, 16, rng, rng.uniform(0.05, 0.6));
        Tensor p = random_probs(16, 16, rng);
        std::array<double, 5> w;
        for (double& x : w) x = rng.uniform(0.1, 10.0);
        const double got = masl_total(y, p, MaslWeights::from(w)).item();
        CHECK(std::fabs(got - oracle::masl_total(grid(y), grid(p), w)) < 1e-9);
        CHECK(masl_total(y, y, MaslWeights::from(w)).item() < 1e-6);
    }
}

TEST_CASE("total is a convex combination of the components")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 400);
        Tensor y = random_mask(16, 16, rng);
        Tensor p = random_probs(16, 16, rng);
        std::array<double, 5> w;
        for (double& x : w) x = rng.uniform(0.1, 10.0);
        LossBreakdown bd;
        const double total = masl_total(y, p, MaslWeights::from(w), {}, &bd).item();
        const auto [lo, hi] = std::minmax_element(bd.components.begin(), bd.components.end());
        CHECK(total >= *lo - 1e-12);
        CHECK(total <= *hi + 1e-12);
    }
}

TEST_CASE("equal components make the total independent of the weights")
{
    const double l = 0.37;
    const auto alpha = modulation({.tubularity = 0.4, .compactness = 0.6, .irregularity = 0.1});
    const Tensor losses = Tensor::full({5}, l);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        std::array<double, 5> w;
        for (double& x : w) x = rng.uniform(0.1, 10.0);
        double den = 0.0;
        for (int i = 0; i < 5; ++i) den += w[i] * alpha[i];
        const double total = masl_combine(losses, Tensor::from_data({5}, {w.begin(), w.end()}), alpha).item();
        CHECK(std::fabs(total - l * den / (den + kMaslEps)) < 1e-15);
        // Only the stabilizer separates the result from l.
        CHECK(std::fabs(total - l) <= l * kMaslEps / den * (1 + 1e-6));
    }
    CHECK_THROWS_AS(masl_combine(Tensor::full({4}, l), Tensor::full({5}, 1.0), alpha), ShapeError);
}

TEST_CASE("total passes grad_check in p and in the weights")
{
    Rng rng(7);
    Tensor y = random_mask(16, 16, rng);
    Tensor p = random_probs(16, 16, rng);
    MaslWeights w = MaslWeights::from({1.3, 0.7, 2.0, 0.5, 3.1});
    CHECK(grad_check([&](const Tensor& q) { return masl_total(y, q, w); }, p) < 1e-4);
    w.values.set_requires_grad();
    CHECK(grad_check_parameters([&] { return masl_total(y, p, w); }, {w.values}).max_rel_err < 1e-4);
}

TEST_CASE("core-only options reduce the total to the core loss")
{
    Rng rng(8);
    Tensor y = random_mask(16, 16, rng);
    Tensor p = random_probs(16, 16, rng);
    const double total = masl_total(y, p, MaslWeights::initial(), MaslOptions::core_only()).item();
    CHECK(total == doctest::Approx(loss_core(y, p).item()).epsilon(1e-6));
}

TEST_CASE("batch total is the mean of the per-sample totals")
{
    Rng rng(9);
    Tensor y0 = random_mask(8, 8, rng), y1 = random_mask(8, 8, rng);
    Tensor p0 = random_probs(8, 8, rng), p1 = random_probs(8, 8, rng);
    Tensor y = reshape(concat({y0, y1}, 0), {2, 1, 8, 8});
    Tensor p = reshape(concat({p0, p1}, 0), {2, 1, 8, 8});
    const auto w = MaslWeights::initial();
    const double expected = (masl_total(y0, p0, w).item() + masl_total(y1, p1, w).item()) / 2;
    CHECK(masl_batch(y, p, w).item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("weights outside the projection range are rejected")
{
    Tensor y = Tensor::zeros({8, 8});
    CHECK_THROWS_AS(masl_total(y, y, MaslWeights::from({1, 1, 1, 1, 20})), ConfigError);
}
