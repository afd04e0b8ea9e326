#include "doctest.h"

#include "helpers.hpp"

#include "s2m/blocks.hpp"
#include "s2m/error.hpp"
#include "s2m/gradcheck.hpp"
#include "s2m/ops.hpp"

#include <cmath>

using namespace s2m;
using testing::random_tensor;
using testing::values;

namespace {

void randomize(ParameterSet& params, Rng& rng)
{
    for (auto& e : params.entries()) {
        auto d = e.tensor.mutable_data();
        for (double& v : d) {
            if (e.name.ends_with("running_var")) {
                v = rng.uniform(0.5, 1.5);
            } else if (e.name.ends_with("gamma")) {
                v = rng.uniform(0.5, 1.5);
            } else {
                v = rng.uniform(-0.5, 0.5);
            }
        }
    }
}

std::vector<double> bn_eval(std::vector<double> x, std::size_t c, std::size_t hw, const BatchNorm2d& bn)
{
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double m = bn.state.running_mean[ch], var = bn.state.running_var[ch];
        for (std::size_t i = 0; i < hw; ++i) {
            double& v = x[ch * hw + i];
            v = bn.gamma[ch] * (v - m) / std::sqrt(var + bn.state.eps) + bn.beta[ch];
        }
    }
    return x;
}

std::vector<double> conv(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w, const Conv2d& c)
{
    const std::size_t k = c.weight.dim(2);
    return oracle::conv2d_direct(x, cin, h, w, values(c.weight), c.weight.dim(0), k, values(c.bias), 1,
                                 c.options.groups);
}

void apply_elu(std::vector<double>& v)
{
    for (double& x : v) x = oracle::elu(x);
}

// Straight-line MRF-SE for one batch item in eval mode.
std::vector<double> mrfse_reference(const std::vector<double>& z, std::size_t c, std::size_t h, std::size_t w,
                                    const MrfSe& b)
{
    const std::size_t hw = h * w, e = b.config().expanded();
    auto ex = bn_eval(conv(z, c, h, w, b.expand), e, hw, b.expand_bn);
    apply_elu(ex);
    std::vector<double> fused;
    for (std::size_t j = 0; j < b.branches.size(); ++j) {
        auto hj = bn_eval(conv(ex, e, h, w, b.branches[j]), e, hw, b.branch_bn[j]);
        apply_elu(hj);
        fused.insert(fused.end(), hj.begin(), hj.end());
    }
    const std::size_t f = fused.size() / hw;
    std::vector<double> pooled(f, 0.0);
    for (std::size_t ch = 0; ch < f; ++ch) {
        for (std::size_t i = 0; i < hw; ++i) pooled[ch] += fused[ch * hw + i];
        pooled[ch] /= double(hw);
    }
    auto hidden = conv(pooled, f, 1, 1, b.se_reduce);
    apply_elu(hidden);
    auto gate = conv(hidden, hidden.size(), 1, 1, b.se_expand);
    for (std::size_t ch = 0; ch < f; ++ch) {
        const double g = oracle::sigmoid(gate[ch]);
        for (std::size_t i = 0; i < hw; ++i) fused[ch * hw + i] *= g;
    }
    auto out = conv(fused, f, h, w, b.project);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
    return out;
}

std::vector<double> gate_reference(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w,
                                   const ContentGate& g)
{
    auto d = conv(x, c, h, w, g.down);
    apply_elu(d);
    auto u = conv(d, g.down.weight.dim(0), h, w, g.up);
    std::vector<double> gated(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gated[i] = x[i] * oracle::sigmoid(u[i]);
    return conv(gated, c, h, w, g.mix);
}

}  // namespace

TEST_CASE("MRF-SE preserves shape")
{
    ParameterSet params;
    Rng rng(1);
    MrfSe block = MrfSe::create(params, "m", {.in_channels = 8}, rng);
    Tensor y = block.forward(random_tensor({1, 8, 16, 16}, rng), {});
    CHECK(y.shape() == Shape{1, 8, 16, 16});
}

TEST_CASE("MRF-SE maps zero to zero")
{
    ParameterSet params;
    Rng rng(2);
    MrfSe block = MrfSe::create(params, "m", {.in_channels = 4}, rng);
    for (bool training : {false, true}) {
        Tensor y = block.forward(Tensor::zeros({2, 4, 8, 8}), {training, &rng});
        for (double v : y.data()) CHECK(v == 0.0);
    }
}

TEST_CASE("MRF-SE matches a straight-line reference")
{
    ParameterSet params;
    Rng rng(3);
    MrfSe block = MrfSe::create(params, "m", {.in_channels = 2}, rng);
    randomize(params, rng);
    Tensor z = random_tensor({1, 2, 4, 4}, rng);
    Tensor y = block.forward(z, {});
    CHECK(testing::max_abs_diff(y, mrfse_reference(values(z), 2, 4, 4, block)) < 1e-12);
}

TEST_CASE("SE gate values lie strictly inside (0, 1)")
{
    ParameterSet params;
    Rng rng(4);
    MrfSe block = MrfSe::create(params, "m", {.in_channels = 4}, rng);
    randomize(params, rng);
    (void)block.forward(random_tensor({2, 4, 8, 8}, rng, -3, 3), {});
    for (double g : block.last_gate().data()) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
    }
}

TEST_CASE("content gate with zero gate weights halves the input before mixing")
{
    ParameterSet params;
    Rng rng(5);
    ContentGate g = ContentGate::create(params, "g", 4, 2, rng);
    for (auto* t : {&g.down.weight, &g.down.bias, &g.up.weight, &g.up.bias}) {
        for (double& v : t->mutable_data()) v = 0.0;
    }
    Tensor x = random_tensor({1, 4, 5, 5}, rng);
    Tensor expected = conv2d(mul_scalar(x, 0.5), g.mix.weight, g.mix.bias);
    CHECK(testing::max_abs_diff(g.forward(x).data(), expected.data()) < 1e-15);
}

TEST_CASE("content gate of zero input is the mixing bias")
{
    ParameterSet params;
    Rng rng(6);
    ContentGate g = ContentGate::create(params, "g", 3, 2, rng);
    randomize(params, rng);
    Tensor y = g.forward(Tensor::zeros({1, 3, 4, 4}));
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 16; ++i) CHECK(y[c * 16 + i] == g.mix.bias[c]);
    }
}

TEST_CASE("content gate matches a straight-line reference")
{
    ParameterSet params;
    Rng rng(7);
    ContentGate g = ContentGate::create(params, "g", 4, 3, rng);
    randomize(params, rng);
    Tensor x = random_tensor({1, 4, 4, 4}, rng);
    CHECK(testing::max_abs_diff(g.forward(x), gate_reference(values(x), 4, 4, 4, g)) < 1e-12);
}

TEST_CASE("SSTM with zero fusion weights is the identity in eval mode")
{
    ParameterSet params;
    Rng rng(8);
    Sstm block = Sstm::create(params, "s", {.channels = 4, .k = 4}, 8, 8, rng);
    for (auto* t : {&block.fuse.weight, &block.fuse.bias}) {
        for (double& v : t->mutable_data()) v = 0.0;
    }
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    Tensor y = block.forward(x, {});
    CHECK(testing::max_abs_diff(y.data(), x.data()) == 0.0);
}

TEST_CASE("SSTM clamps k to the stage and preserves shape")
{
    ParameterSet params;
    Rng rng(9);
    Sstm block = Sstm::create(params, "s", {.channels = 8, .k = 32}, 22, 22, rng);
    CHECK(block.filter.k == 22);
    CHECK(block.forward(random_tensor({1, 8, 22, 22}, rng), {}).shape() == Shape{1, 8, 22, 22});
}

TEST_CASE("SSTM passes grad_check")
{
    ParameterSet params;
    Rng rng(10);
    Sstm block = Sstm::create(params, "s", {.channels = 4, .k = 4}, 8, 8, rng);
    randomize(params, rng);
    Tensor r = random_tensor({1, 4, 8, 8}, rng);
    Tensor x = random_tensor({1, 4, 8, 8}, rng);
    CHECK(grad_check([&](const Tensor& in) { return sum(mul(block.forward(in, {}), r)); }, x) < 1e-4);
    const auto rep = grad_check_parameters([&] { return sum(mul(block.forward(x, {}), r)); }, params.trainable());
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("SSTM corner output depends on the opposite corner input")
{
    ParameterSet params;
    Rng rng(11);
    Sstm block = Sstm::create(params, "s", {.channels = 2, .k = 4}, 8, 8, rng);
    randomize(params, rng);
    Tensor x = random_tensor({1, 2, 8, 8}, rng).set_requires_grad();
    Tape tape;
    tape.backward(slice(reshape(block.forward(x, {}), {128}), 0, 0, 1));
    CHECK(std::fabs(x.grad()[63]) > 1e-10);
}

TEST_CASE("local MRF block has zero Jacobian beyond its receptive radius")
{
    ParameterSet params;
    Rng rng(12);
    MrfSe block = MrfSe::create(params, "m", {.in_channels = 2, .use_se = false}, rng);
    randomize(params, rng);
    Tensor x = random_tensor({1, 2, 12, 12}, rng).set_requires_grad();
    Tape tape;
    tape.backward(slice(reshape(block.forward(x, {}), {288}), 0, 0, 1));
    auto g = x.grad();
    // 7x7 depthwise reaches 3 pixels from (0, 0); everything further is untouched.
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < 12; ++i) {
            for (std::size_t j = 0; j < 12; ++j) {
                if (i > 3 || j > 3) CHECK(g[(c * 12 + i) * 12 + j] == 0.0);
            }
        }
    }
    CHECK(std::fabs(g[0]) > 0.0);
}

TEST_CASE("SSTM dropout needs an RNG when training")
{
    ParameterSet params;
    Rng rng(13);
    Sstm block = Sstm::create(params, "s", {.channels = 2, .k = 4}, 8, 8, rng);
    CHECK_THROWS_AS(block.forward(random_tensor({1, 2, 8, 8}, rng), {true, nullptr}), ConfigError);
}
