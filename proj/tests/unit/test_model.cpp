#include "doctest.h"

#include "helpers.hpp"

#include "s2m/error.hpp"
#include "s2m/model.hpp"
#include "s2m/ops.hpp"

#include <chrono>

using namespace s2m;
using testing::random_tensor;

namespace {

std::size_t conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups = 1)
{
    return cout * (cin / groups) * k * k + cout;
}

// Layer-by-layer trainable scalar count of the architecture.
std::size_t expected_params(const ModelConfig& cfg)
{
    std::size_t n = 0, prev = cfg.in_channels, h = cfg.height, w = cfg.width;
    for (std::size_t s = 0; s < 5; ++s) {
        const std::size_t c = cfg.stage_channels[s];
        h /= 2;
        w /= 2;
        n += conv(prev, c, 3) + 2 * c;
        const std::size_t e = c * cfg.expansion, fused = e * cfg.kernels.size();
        const std::size_t hidden = std::max<std::size_t>(1, fused / cfg.se_reduction);
        n += conv(c, e, 1) + 2 * e;
        for (std::size_t k : cfg.kernels) n += conv(e, e, k, e) + 2 * e;
        n += conv(fused, hidden, 1) + conv(hidden, fused, 1) + conv(fused, c, 1);
        const std::size_t kk = std::min({cfg.k, h, w});
        n += 2 * kk * kk * c;
        n += conv(c, cfg.gate_bottleneck, 1) + conv(cfg.gate_bottleneck, c, 1) + conv(c, c, 1);
        n += conv(2 * c, c, 1) + 2 * c;
        prev = c;
    }
    std::size_t incoming = cfg.stage_channels[4];
    for (std::size_t m = 4; m >= 1; --m) {
        const std::size_t skip = cfg.stage_channels[m - 1], out = cfg.stage_channels[m];
        n += conv(incoming + skip, out, 3) + 2 * out + conv(out, out, 3) + 2 * out;
        n += conv(out, out, 3) + conv(out, 1, 1) + conv(out, out, 3) + 2 * out;
        n += conv(out, out, 1) + 2 * out;
        incoming = out;
    }
    return n + conv(incoming, 1, 1);
}

}  // namespace

TEST_CASE("parameter count matches layer arithmetic")
{
    CHECK(Model::build(ModelConfig::desk()).param_count() == expected_params(ModelConfig::desk()));
    ModelConfig full;
    CHECK(Model::build(full).param_count() == expected_params(full));
}

TEST_CASE("full configuration lands near the stated size")
{
    const std::size_t n = Model::build(ModelConfig{}).param_count();
    CHECK(n >= 3'800'000);
    CHECK(n <= 5'600'000);
}

TEST_CASE("doubling the channels grows the count between 2x and 4x")
{
    ModelConfig a = ModelConfig::desk(), b = a;
    for (auto& c : b.stage_channels) c *= 2;
    const double ratio = double(Model::build(b).param_count()) / double(Model::build(a).param_count());
    CHECK(ratio > 2.0);
    CHECK(ratio < 4.0);
}

TEST_CASE("same seed gives identical parameters")
{
    ModelConfig cfg = ModelConfig::desk();
    cfg.seed = 42;
    CHECK(Model::build(cfg).snapshot() == Model::build(cfg).snapshot());
    cfg.seed = 43;
    ModelConfig other = cfg;
    other.seed = 42;
    CHECK(Model::build(cfg).snapshot() != Model::build(other).snapshot());
}

TEST_CASE("desk forward: shapes, range, determinism and speed")
{
    Model model = Model::build(ModelConfig::desk());
    model.eval();
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 64, 64}, rng, 0, 1).to(Dtype::f32);
    const auto t0 = std::chrono::steady_clock::now();
    ModelOutput out = model.forward(x);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 1.0);
    CHECK(out.prediction.shape() == Shape{2, 1, 64, 64});
    for (double p : out.prediction.data()) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
    const std::size_t sizes[] = {32, 16, 8, 4, 2};
    for (std::size_t s = 0; s < 5; ++s) {
        CHECK(out.encoder[s].dim(1) == model.config().stage_channels[s]);
        CHECK(out.encoder[s].dim(2) == sizes[s]);
        CHECK(out.encoder[s].dim(3) == sizes[s]);
    }
    CHECK(out.betas.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.betas[i].dim(2) == sizes[3 - i]);
    CHECK(testing::max_abs_diff(model.forward(x).prediction.data(), out.prediction.data()) == 0.0);
}

TEST_CASE("stage resolutions and truncations")
{
    ModelConfig full;
    CHECK(full.stage_resolutions() == std::vector<std::size_t>{176, 88, 44, 22, 11});
    CHECK(full.stage_truncations() == std::vector<std::size_t>{32, 32, 32, 22, 11});
}

TEST_CASE("invalid configurations are rejected")
{
    ModelConfig cfg = ModelConfig::desk();
    cfg.height = 48;
    CHECK_THROWS_AS(Model::build(cfg), ConfigError);
    cfg = ModelConfig::desk();
    cfg.stage_channels.pop_back();
    CHECK_THROWS_AS(Model::build(cfg), ConfigError);
    Model m = Model::build(ModelConfig::desk());
    CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 3, 32, 32}, Dtype::f32)), ShapeError);
}

TEST_CASE("far corner input reaches the opposite output corner")
{
    ModelConfig cfg = ModelConfig::desk();
    cfg.dtype = Dtype::f64;
    Model model = Model::build(cfg);
    model.eval();
    Rng rng(2);
    Tensor x = random_tensor({1, 3, 64, 64}, rng, 0, 1).set_requires_grad();
    Tape tape;
    tape.backward(slice(reshape(model.forward(x).prediction, {64 * 64}), 0, 0, 1));
    const double g = x.grad()[63 * 64 + 63];
    CHECK(std::fabs(g) > 0.0);
}

TEST_CASE("ablations build and run")
{
    for (int variant = 0; variant < 3; ++variant) {
        ModelConfig cfg = ModelConfig::desk();
        cfg.use_mrfse = variant != 0;
        cfg.use_sstm = variant != 1;
        cfg.use_boundary_decoder = variant != 2;
        Model m = Model::build(cfg);
        ModelOutput out = m.forward(Tensor::full({1, 3, 64, 64}, 0.5, Dtype::f32));
        CHECK(out.prediction.shape() == Shape{1, 1, 64, 64});
        CHECK(out.betas.size() == (cfg.use_boundary_decoder ? 4u : 0u));
    }
}
