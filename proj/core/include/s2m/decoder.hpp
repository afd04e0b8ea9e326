#pragma once

#include "s2m/layers.hpp"

#include <cstddef>
#include <string>

namespace s2m {

/// Convex per-pixel blend r * (1 - beta) + b * beta. beta is [B,1,H,W] (or
/// r's shape) and must lie in [0, 1]; r and b share a shape.
Tensor soft_route(const Tensor& r, const Tensor& b, const Tensor& beta);

struct DecoderStageOutput {
    Tensor d_next;
    Tensor beta;    // [B,1,H,W]
    Tensor region;  // r
    Tensor boundary;  // b
    Tensor routed;  // z
};

/// One boundary-focused decoder stage: nearest 2x upsample of the previous
/// stage, skip concatenation, region stream, boundary stream with a learned
/// soft spatial gate, routing and a 1x1 projection.
class DecoderStage {
public:
    /// use_boundary = false drops the boundary stream (z = r).
    static DecoderStage create(ParameterSet& params, const std::string& prefix, std::size_t prev_channels,
                               std::size_t skip_channels, std::size_t out_channels, Rng& rng,
                               bool use_boundary = true);

    DecoderStageOutput forward(const Tensor& d_prev, const Tensor& skip, const RunContext& ctx);

    std::size_t out_channels() const { return project.out_channels(); }
    bool use_boundary() const { return use_boundary_; }

    Conv2d region1;
    BatchNorm2d region1_bn;
    Conv2d region2;
    BatchNorm2d region2_bn;
    Conv2d boundary_pre;
    Conv2d beta_head;  // 1 output channel
    Conv2d boundary_post;
    BatchNorm2d boundary_bn;
    Conv2d project;
    BatchNorm2d project_bn;

private:
    bool use_boundary_ = true;
};

} // namespace s2m
