#pragma once

#include "s2m/blocks.hpp"
#include "s2m/decoder.hpp"
#include "s2m/layers.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace s2m {

inline constexpr std::size_t kEncoderStages = 5;
inline constexpr std::size_t kDecoderStages = 4;

struct ModelConfig {
    std::size_t height = 352;
    std::size_t width = 352;
    std::size_t in_channels = 3;
    std::vector<std::size_t> stage_channels{24, 32, 64, 80, 128};
    std::size_t k = 32;
    std::size_t expansion = 6;
    std::vector<std::size_t> kernels{3, 5, 7};
    std::size_t se_reduction = 16;
    std::size_t gate_bottleneck = 16;
    double dropout = 0.1;
    std::uint64_t seed = 0;
    Dtype dtype = Dtype::f32;

    // Architecture ablations.
    bool use_mrfse = true;
    bool use_sstm = true;
    bool use_boundary_decoder = true;

    /// Small configuration for CPU experiments: channels {8,12,16,24,32}, 64x64.
    static ModelConfig desk();

    void validate() const;
    /// Spatial size of encoder stage outputs, e.g. {176, 88, 44, 22, 11} for 352.
    std::vector<std::size_t> stage_resolutions() const;
    /// Truncation actually used by each stage's spectral filter.
    std::vector<std::size_t> stage_truncations() const;
    /// Output channels of decoder stage m (1-based, m = 1 is the shallowest).
    std::size_t decoder_channels(std::size_t m) const;
};

struct ModelOutput {
    Tensor prediction;            // [B,1,H,W], sigmoid probabilities
    std::vector<Tensor> betas;    // per decoder stage, deepest first; empty without the boundary stream
    std::vector<Tensor> encoder;  // stage outputs, shallowest first
};

/// Five-stage encoder (stride-2 stem, MRF-SE, SSTM per stage), four
/// boundary-focused decoder stages fed by skips, and a sigmoid head at input
/// resolution. Owns its named parameters, RNG state and train/eval mode.
class Model {
public:
    /// Deterministic from cfg.seed: He-uniform convolutions, identity spectral
    /// filters, zero biases.
    static Model build(const ModelConfig& cfg);

    ModelOutput forward(const Tensor& x);
    /// Same, with an explicit context instead of the model's own mode and RNG.
    ModelOutput forward(const Tensor& x, const RunContext& ctx);

    void train() { training_ = true; }
    void eval() { training_ = false; }
    bool training() const { return training_; }

    const ModelConfig& config() const { return cfg_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    Rng& rng() { return rng_; }
    const Rng& rng() const { return rng_; }

    /// Trainable scalar count (a complex filter entry counts as two).
    std::size_t param_count() const { return params_.scalar_count(); }

    /// Value copy of every named tensor, in registration order.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

    struct EncoderStage {
        Conv2d stem;
        BatchNorm2d stem_bn;
        std::optional<MrfSe> mrfse;
        std::optional<Sstm> sstm;
    };

    std::vector<EncoderStage>& encoder() { return encoder_; }
    std::vector<DecoderStage>& decoder() { return decoder_; }
    Conv2d& head() { return head_; }

private:
    ModelConfig cfg_;
    ParameterSet params_;
    Rng rng_;
    bool training_ = false;
    std::vector<EncoderStage> encoder_;
    std::vector<DecoderStage> decoder_;  // deepest (m = 4) first
    Conv2d head_;
};

std::size_t param_count(const Model& model);

} // namespace s2m
