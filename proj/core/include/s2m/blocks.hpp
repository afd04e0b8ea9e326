#pragma once

#include "s2m/layers.hpp"
#include "s2m/spectral.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace s2m {

struct MrfSeConfig {
    std::size_t in_channels = 0;
    std::size_t expansion = 6;
    std::vector<std::size_t> kernels{3, 5, 7};
    std::size_t se_reduction = 16;
    /// Disabling squeeze-and-excitation leaves a purely local convolutional block.
    bool use_se = true;

    void validate() const;
    std::size_t expanded() const { return in_channels * expansion; }
    std::size_t fused() const { return expanded() * kernels.size(); }
    /// SE bottleneck width, clamped to at least one channel.
    std::size_t se_hidden() const { return std::max<std::size_t>(1, fused() / std::max<std::size_t>(1, se_reduction)); }
};

/// Multi-receptive-field block: 1x1 expansion, parallel depthwise convolutions,
/// squeeze-and-excitation over the concatenation, 1x1 projection, residual.
class MrfSe {
public:
    static MrfSe create(ParameterSet& params, const std::string& prefix, const MrfSeConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& z, const RunContext& ctx);
    /// Excitation weights of the last forward pass, [B, fused, 1, 1].
    const Tensor& last_gate() const { return last_gate_; }
    const MrfSeConfig& config() const { return cfg_; }

    Conv2d expand;
    BatchNorm2d expand_bn;
    std::vector<Conv2d> branches;
    std::vector<BatchNorm2d> branch_bn;
    Conv2d se_reduce;
    Conv2d se_expand;
    Conv2d project;

private:
    MrfSeConfig cfg_;
    Tensor last_gate_;
};

struct SstmConfig {
    std::size_t channels = 0;
    std::size_t k = 32;
    std::size_t gate_bottleneck = 16;
    double dropout_p = 0.1;
    /// Disables the spectral branch (its slot in the fusion input is zeros).
    bool use_spectral = true;

    void validate() const;
};

/// Bottleneck sigmoid gate followed by 1x1 channel mixing:
/// out = Conv1x1(x * sigmoid(Conv1x1_up(ELU(Conv1x1_down(x))))).
class ContentGate {
public:
    static ContentGate create(ParameterSet& params, const std::string& prefix, std::size_t channels,
                              std::size_t bottleneck, Rng& rng);
    Tensor forward(const Tensor& x) const;
    Tensor gate(const Tensor& x) const;

    Conv2d down;
    Conv2d up;
    Conv2d mix;
};

/// Dual-branch token mixer: x + Dropout(LN(Conv1x1([spectral(x) || gate(x)]))).
class Sstm {
public:
    /// `k` in cfg is the requested truncation; the filter is built for
    /// min(k, height, width) of the stage it serves.
    static Sstm create(ParameterSet& params, const std::string& prefix, const SstmConfig& cfg, std::size_t height,
                       std::size_t width, Rng& rng);

    Tensor forward(const Tensor& x, const RunContext& ctx) const;
    const SstmConfig& config() const { return cfg_; }

    SpectralFilter filter;
    ContentGate gate;
    Conv2d fuse;
    LayerNorm2d norm;

private:
    SstmConfig cfg_;
};

} // namespace s2m
