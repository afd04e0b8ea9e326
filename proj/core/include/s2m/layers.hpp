#pragma once

#include "s2m/ops.hpp"
#include "s2m/rng.hpp"
#include "s2m/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace s2m {

/// Role of a named tensor in a model; decides weight decay and trainability.
enum class ParamKind {
    weight,    // convolution kernels: trainable, decayed
    spectral,  // spectral filter parts: trainable, decayed
    bias,      // trainable, not decayed
    norm,      // normalization affine parameters: trainable, not decayed
    buffer,    // running statistics: saved, never trained
};

struct ParamEntry {
    std::string name;
    Tensor tensor;
    ParamKind kind;

    bool trainable() const { return kind != ParamKind::buffer; }
    bool decayed() const { return kind == ParamKind::weight || kind == ParamKind::spectral; }
};

/// Ordered registry of every named tensor of a model. Names are unique and
/// insertion order is stable, which fixes checkpoint layout.
class ParameterSet {
public:
    explicit ParameterSet(Dtype dtype = Dtype::f64) : dtype_(dtype) {}

    Dtype dtype() const { return dtype_; }

    /// Registers t under name; trainable kinds are marked requires_grad.
    Tensor add(const std::string& name, Tensor t, ParamKind kind);

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<ParamEntry>& entries() { return entries_; }
    const ParamEntry* find(const std::string& name) const;
    Tensor get(const std::string& name) const;

    std::vector<Tensor> trainable() const;
    /// Scalar count over trainable entries.
    std::size_t scalar_count() const;
    void zero_grad();

private:
    Dtype dtype_;
    std::vector<ParamEntry> entries_;
};

/// Per-forward state shared by all layers.
struct RunContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout
};

/// Convolution with He-uniform weights (bound sqrt(6 / fan_in)) and zero bias.
struct Conv2d {
    Tensor weight;
    Tensor bias;
    Conv2dOptions options;

    static Conv2d create(ParameterSet& params, const std::string& prefix, std::size_t in_channels,
                         std::size_t out_channels, std::size_t kernel, Rng& rng, std::size_t stride = 1,
                         std::size_t groups = 1);

    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
    std::size_t out_channels() const { return weight.dim(0); }
};

struct BatchNorm2d {
    Tensor gamma;
    Tensor beta;
    BatchNormState state;

    static BatchNorm2d create(ParameterSet& params, const std::string& prefix, std::size_t channels);
    Tensor operator()(const Tensor& x, const RunContext& ctx) { return batch_norm(x, gamma, beta, state, ctx.training); }
};

struct LayerNorm2d {
    Tensor gamma;
    Tensor beta;

    static LayerNorm2d create(ParameterSet& params, const std::string& prefix, std::size_t channels);
    Tensor operator()(const Tensor& x) const { return layer_norm_channels(x, gamma, beta); }
};

} // namespace s2m
