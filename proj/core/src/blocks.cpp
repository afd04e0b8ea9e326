#include "s2m/blocks.hpp"

#include "s2m/error.hpp"

namespace s2m {

void MrfSeConfig::validate() const
{
    if (in_channels == 0) throw ConfigError("MRF-SE: in_channels must be positive");
    if (expansion < 1) throw ConfigError("MRF-SE: expansion must be >= 1");
    if (kernels.empty()) throw ConfigError("MRF-SE: at least one kernel size required");
    for (std::size_t k : kernels) {
        if (k % 2 == 0) throw ConfigError("MRF-SE: kernel sizes must be odd, got " + std::to_string(k));
    }
}

MrfSe MrfSe::create(ParameterSet& params, const std::string& prefix, const MrfSeConfig& cfg, Rng& rng)
{
    cfg.validate();
    MrfSe block;
    block.cfg_ = cfg;
    const std::size_t e = cfg.expanded();
    block.expand = Conv2d::create(params, prefix + ".expand", cfg.in_channels, e, 1, rng);
    block.expand_bn = BatchNorm2d::create(params, prefix + ".expand_bn", e);
    for (std::size_t k : cfg.kernels) {
        const std::string name = prefix + ".dw" + std::to_string(k);
        block.branches.push_back(Conv2d::create(params, name, e, e, k, rng, 1, e));
        block.branch_bn.push_back(BatchNorm2d::create(params, name + "_bn", e));
    }
    if (cfg.use_se) {
        block.se_reduce = Conv2d::create(params, prefix + ".se_reduce", cfg.fused(), cfg.se_hidden(), 1, rng);
        block.se_expand = Conv2d::create(params, prefix + ".se_expand", cfg.se_hidden(), cfg.fused(), 1, rng);
    }
    block.project = Conv2d::create(params, prefix + ".project", cfg.fused(), cfg.in_channels, 1, rng);
    return block;
}

Tensor MrfSe::forward(const Tensor& z, const RunContext& ctx)
{
    if (z.rank() != 4 || z.dim(1) != cfg_.in_channels) {
        throw ShapeError("mrfse_forward: expected [B," + std::to_string(cfg_.in_channels) + ",H,W], got " +
                         shape_str(z.shape()));
    }
    const Tensor expanded = elu(expand_bn(expand(z), ctx));
    std::vector<Tensor> heads;
    heads.reserve(branches.size());
    for (std::size_t j = 0; j < branches.size(); ++j) heads.push_back(elu(branch_bn[j](branches[j](expanded), ctx)));
    Tensor fused = concat(heads, 1);
    if (cfg_.use_se) {
        last_gate_ = sigmoid(se_expand(elu(se_reduce(global_avg_pool(fused)))));
        fused = mul(fused, last_gate_);
    }
    return add(z, project(fused));
}

void SstmConfig::validate() const
{
    if (channels == 0) throw ConfigError("SSTM: channels must be positive");
    if (k == 0) throw ConfigError("SSTM: truncation k must be positive");
    if (gate_bottleneck < 1) throw ConfigError("SSTM: gate bottleneck must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("SSTM: dropout must be in [0, 1)");
}

ContentGate ContentGate::create(ParameterSet& params, const std::string& prefix, std::size_t channels,
                                std::size_t bottleneck, Rng& rng)
{
    ContentGate g;
    g.down = Conv2d::create(params, prefix + ".down", channels, bottleneck, 1, rng);
    g.up = Conv2d::create(params, prefix + ".up", bottleneck, channels, 1, rng);
    g.mix = Conv2d::create(params, prefix + ".mix", channels, channels, 1, rng);
    return g;
}

Tensor ContentGate::gate(const Tensor& x) const { return sigmoid(up(elu(down(x)))); }

Tensor ContentGate::forward(const Tensor& x) const { return mix(mul(x, gate(x))); }

Sstm Sstm::create(ParameterSet& params, const std::string& prefix, const SstmConfig& cfg, std::size_t height,
                  std::size_t width, Rng& rng)
{
    cfg.validate();
    Sstm block;
    block.cfg_ = cfg;
    const std::size_t c = cfg.channels;
    if (cfg.use_spectral) {
        const std::size_t k = clamp_truncation(cfg.k, height, width);
        block.filter = SpectralFilter::identity(k, c, params.dtype());
        block.filter.real = params.add(prefix + ".wspec.real", block.filter.real, ParamKind::spectral);
        block.filter.imag = params.add(prefix + ".wspec.imag", block.filter.imag, ParamKind::spectral);
    }
    block.gate = ContentGate::create(params, prefix + ".gate", c, cfg.gate_bottleneck, rng);
    block.fuse = Conv2d::create(params, prefix + ".fuse", 2 * c, c, 1, rng);
    block.norm = LayerNorm2d::create(params, prefix + ".norm", c);
    return block;
}

Tensor Sstm::forward(const Tensor& x, const RunContext& ctx) const
{
    if (x.rank() != 4 || x.dim(1) != cfg_.channels) {
        throw ShapeError("sstm_forward: expected [B," + std::to_string(cfg_.channels) + ",H,W], got " +
                         shape_str(x.shape()));
    }
    const Tensor spectral = cfg_.use_spectral ? spectral_branch(x, filter) : Tensor::zeros(x.shape(), x.dtype());
    const Tensor mixed = norm(fuse(concat({spectral, gate.forward(x)}, 1)));
    if (ctx.training && cfg_.dropout_p > 0.0 && ctx.rng == nullptr) {
        throw ConfigError("sstm_forward: training with dropout needs an RNG");
    }
    Rng unused(0);
    return add(x, dropout(mixed, cfg_.dropout_p, ctx.training, ctx.rng ? *ctx.rng : unused));
}

} // namespace s2m
