#include "s2m/gradcheck_suite.hpp"

#include "s2m/blocks.hpp"
#include "s2m/decoder.hpp"
#include "s2m/error.hpp"
#include "s2m/masl.hpp"
#include "s2m/model.hpp"
#include "s2m/ops.hpp"

#include <chrono>

namespace s2m {

namespace {

// Central-difference steps. The decoder probe includes conv biases ahead of
// train-mode normalization whose exact gradient is zero, so its step is
// sized to keep rounding noise far below the 1e-8 error floor.
constexpr double kDecoderEps = 1e-4;
constexpr double kModelEps = 3e-5;

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi)
{
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v));
}

// Scale parameters and variances stay in [0.5, 1.5]; everything else, the
// spectral filter included, is drawn from [-0.5, 0.5].
void randomize(ParameterSet& params, Rng& rng)
{
    for (auto& e : params.entries()) {
        const bool scale = e.name.ends_with("gamma") || e.name.ends_with("running_var");
        for (double& v : e.tensor.mutable_data()) v = scale ? rng.uniform(0.5, 1.5) : rng.uniform(-0.5, 0.5);
    }
}

void merge(GradCheckReport& into, const GradCheckReport& part)
{
    if (part.max_rel_err >= into.max_rel_err) {
        into.max_rel_err = part.max_rel_err;
        into.worst_index = into.checked + part.worst_index;
        into.analytic = part.analytic;
        into.numeric = part.numeric;
    }
    into.checked += part.checked;
}

GradCheckReport check_sstm(Rng& rng)
{
    ParameterSet params;
    Sstm block = Sstm::create(params, "sstm", {.channels = 4, .k = 4}, 8, 8, rng);
    randomize(params, rng);
    const Tensor x = uniform_tensor({1, 4, 8, 8}, rng, -1, 1);
    const Tensor r = uniform_tensor({1, 4, 8, 8}, rng, -1, 1);
    GradCheckReport rep = grad_check_report([&](const Tensor& in) { return sum(mul(block.forward(in, {}), r)); }, x);
    merge(rep, grad_check_parameters([&] { return sum(mul(block.forward(x, {}), r)); }, params.trainable()));
    return rep;
}

GradCheckReport check_decoder(Rng& rng)
{
    ParameterSet params;
    DecoderStage deep = DecoderStage::create(params, "dec.2", 4, 3, 3, rng);
    DecoderStage shallow = DecoderStage::create(params, "dec.1", 3, 2, 2, rng);
    randomize(params, rng);
    const Tensor bottom = uniform_tensor({2, 4, 2, 2}, rng, -1, 1);
    const Tensor skip2 = uniform_tensor({2, 3, 4, 4}, rng, -1, 1);
    const Tensor skip1 = uniform_tensor({2, 2, 8, 8}, rng, -1, 1);
    const Tensor r = uniform_tensor({2, 2, 8, 8}, rng, -1, 1);
    const RunContext ctx{true, &rng};
    auto chain = [&](const Tensor& in) {
        const Tensor d = deep.forward(in, skip2, ctx).d_next;
        return mean(mul(shallow.forward(d, skip1, ctx).d_next, r));
    };
    GradCheckReport rep = grad_check_report(chain, bottom, kDecoderEps);
    merge(rep, grad_check_parameters([&] { return chain(bottom); }, params.trainable(), kDecoderEps));
    return rep;
}

GradCheckReport check_masl(Rng& rng)
{
    std::vector<double> y(256);
    for (double& v : y) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const Tensor mask = Tensor::from_data({16, 16}, y);
    const Tensor p = uniform_tensor({16, 16}, rng, 0.02, 0.98);
    MaslWeights w = MaslWeights::from({rng.uniform(0.1, 10), rng.uniform(0.1, 10), rng.uniform(0.1, 10),
                                       rng.uniform(0.1, 10), rng.uniform(0.1, 10)});
    GradCheckReport rep = grad_check_report([&](const Tensor& q) { return masl_total(mask, q, w); }, p);
    w.values.set_requires_grad();
    merge(rep, grad_check_parameters([&] { return masl_total(mask, p, w); }, {w.values}));
    return rep;
}

GradCheckReport check_model(Rng& rng)
{
    ModelConfig cfg;
    cfg.height = 32;
    cfg.width = 32;
    cfg.stage_channels = {2, 2, 2, 2, 2};
    cfg.dtype = Dtype::f64;
    cfg.seed = rng.next_u64();
    Model model = Model::build(cfg);
    for (auto& e : model.parameters().entries()) {
        if (e.kind == ParamKind::weight) continue;
        const bool scale = e.name.ends_with("gamma") || e.name.ends_with("running_var");
        for (double& v : e.tensor.mutable_data()) v = scale ? rng.uniform(0.5, 1.5) : rng.uniform(-0.2, 0.2);
    }
    model.eval();
    const Tensor x = uniform_tensor({1, 3, 32, 32}, rng, 0, 1);
    const Tensor r = uniform_tensor({1, 1, 32, 32}, rng, -1, 1);
    GradCheckReport rep =
        grad_check_report([&](const Tensor& in) { return mean(mul(model.forward(in).prediction, r)); }, x, kModelEps);
    merge(rep, grad_check_parameters([&] { return mean(mul(model.forward(x).prediction, r)); },
                                     model.parameters().trainable(), kModelEps, 3));
    return rep;
}

} // namespace

const std::vector<std::string>& gradcheck_modules()
{
    static const std::vector<std::string> names{"sstm", "decoder", "masl", "model"};
    return names;
}

ModuleCheck run_module_gradcheck(std::string_view module, std::uint64_t seed)
{
    Rng rng(seed ^ 0x6AADC4EC);
    const auto t0 = std::chrono::steady_clock::now();
    ModuleCheck out;
    out.module = std::string(module);
    if (module == "sstm") {
        out.report = check_sstm(rng);
    } else if (module == "decoder") {
        out.report = check_decoder(rng);
    } else if (module == "masl") {
        out.report = check_masl(rng);
    } else if (module == "model") {
        out.report = check_model(rng);
    } else {
        throw ConfigError("gradcheck: unknown module '" + std::string(module) + "' (expected sstm, decoder, masl, model)");
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace s2m
