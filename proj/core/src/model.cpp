#include "s2m/model.hpp"

#include "s2m/error.hpp"
#include "s2m/spectral.hpp"

namespace s2m {

ModelConfig ModelConfig::desk()
{
    ModelConfig cfg;
    cfg.height = 64;
    cfg.width = 64;
    cfg.stage_channels = {8, 12, 16, 24, 32};
    return cfg;
}

void ModelConfig::validate() const
{
    if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
        throw ConfigError("model: input size " + std::to_string(height) + "x" + std::to_string(width) +
                          " must be divisible by 32 (five stride-2 stages)");
    }
    if (stage_channels.size() != kEncoderStages) {
        throw ConfigError("model: stage_channels needs exactly 5 entries, got " + std::to_string(stage_channels.size()));
    }
    for (std::size_t c : stage_channels) {
        if (c == 0) throw ConfigError("model: stage channel counts must be positive");
    }
    if (in_channels == 0) throw ConfigError("model: in_channels must be positive");
    if (k == 0) throw ConfigError("model: k must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0, 1)");
    if (gate_bottleneck == 0) throw ConfigError("model: gate_bottleneck must be positive");
    if (expansion == 0) throw ConfigError("model: expansion must be positive");
}

std::vector<std::size_t> ModelConfig::stage_resolutions() const
{
    std::vector<std::size_t> r;
    std::size_t h = height;
    for (std::size_t i = 0; i < kEncoderStages; ++i) {
        h /= 2;
        r.push_back(h);
    }
    return r;
}

std::vector<std::size_t> ModelConfig::stage_truncations() const
{
    std::vector<std::size_t> ks;
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < kEncoderStages; ++i) {
        h /= 2;
        w /= 2;
        ks.push_back(clamp_truncation(k, h, w));
    }
    return ks;
}

std::size_t ModelConfig::decoder_channels(std::size_t m) const
{
    // A stage keeps the width of the deeper feature it receives.
    return stage_channels.at(m);
}

Model Model::build(const ModelConfig& cfg)
{
    cfg.validate();
    Model model;
    model.cfg_ = cfg;
    model.params_ = ParameterSet(cfg.dtype);
    model.rng_ = Rng(cfg.seed);
    Rng init(cfg.seed ^ 0x5EEDC0DEULL);
    ParameterSet& params = model.params_;

    std::size_t h = cfg.height, w = cfg.width, prev = cfg.in_channels;
    for (std::size_t s = 0; s < kEncoderStages; ++s) {
        h /= 2;
        w /= 2;
        const std::size_t c = cfg.stage_channels[s];
        const std::string prefix = "enc." + std::to_string(s + 1);
        EncoderStage stage;
        stage.stem = Conv2d::create(params, prefix + ".stem", prev, c, 3, init, 2);
        stage.stem_bn = BatchNorm2d::create(params, prefix + ".stem_bn", c);
        if (cfg.use_mrfse) {
            MrfSeConfig mc;
            mc.in_channels = c;
            mc.expansion = cfg.expansion;
            mc.kernels = cfg.kernels;
            mc.se_reduction = cfg.se_reduction;
            stage.mrfse = MrfSe::create(params, prefix + ".mrfse", mc, init);
        }
        if (cfg.use_sstm) {
            SstmConfig sc;
            sc.channels = c;
            sc.k = cfg.k;
            sc.gate_bottleneck = cfg.gate_bottleneck;
            sc.dropout_p = cfg.dropout;
            stage.sstm = Sstm::create(params, prefix + ".sstm", sc, h, w, init);
        }
        model.encoder_.push_back(std::move(stage));
        prev = c;
    }

    std::size_t incoming = cfg.stage_channels.back();
    for (std::size_t m = kDecoderStages; m >= 1; --m) {
        const std::size_t skip = cfg.stage_channels[m - 1];
        const std::size_t out = cfg.decoder_channels(m);
        model.decoder_.push_back(DecoderStage::create(params, "dec." + std::to_string(m), incoming, skip, out, init,
                                                      cfg.use_boundary_decoder));
        incoming = out;
    }
    model.head_ = Conv2d::create(params, "head", incoming, 1, 1, init);
    return model;
}

ModelOutput Model::forward(const Tensor& x)
{
    return forward(x, RunContext{training_, &rng_});
}

ModelOutput Model::forward(const Tensor& x, const RunContext& ctx)
{
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.height || x.dim(3) != cfg_.width) {
        throw ShapeError("model forward: expected [B," + std::to_string(cfg_.in_channels) + "," +
                         std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "], got " +
                         shape_str(x.shape()));
    }
    ModelOutput out;
    Tensor feature = x;
    for (auto& stage : encoder_) {
        feature = elu(stage.stem_bn(stage.stem(feature), ctx));
        if (stage.mrfse) feature = stage.mrfse->forward(feature, ctx);
        if (stage.sstm) feature = stage.sstm->forward(feature, ctx);
        out.encoder.push_back(feature);
    }
    Tensor d = out.encoder.back();
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        const std::size_t m = kDecoderStages - i;
        DecoderStageOutput stage = decoder_[i].forward(d, out.encoder[m - 1], ctx);
        if (stage.beta.defined()) out.betas.push_back(stage.beta);
        d = stage.d_next;
    }
    out.prediction = sigmoid(head_(upsample_nearest2x(d)));
    return out;
}

std::vector<std::vector<double>> Model::snapshot() const
{
    std::vector<std::vector<double>> values;
    for (const auto& e : params_.entries()) {
        auto d = e.tensor.data();
        values.emplace_back(d.begin(), d.end());
    }
    return values;
}

void Model::restore(const std::vector<std::vector<double>>& values)
{
    auto& entries = params_.entries();
    if (values.size() != entries.size()) throw ConfigError("restore: snapshot does not match parameter layout");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto dst = entries[i].tensor.mutable_data();
        if (dst.size() != values[i].size()) throw ConfigError("restore: size mismatch for " + entries[i].name);
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

std::size_t param_count(const Model& model) { return model.param_count(); }

} // namespace s2m
