#pragma once

#include "s2m/rng.hpp"
#include "s2m/tensor.hpp"

#include <cstddef>
#include <optional>
#include <vector>

// Differentiable tensor operations. Every op validates shapes (ShapeError
// naming the op and operand shapes), rejects non-finite results
// (NumericError naming the op) and records a backward rule on the active tape
// when any input requires a gradient.
namespace s2m {

// Elementwise binary ops broadcast operands of equal rank where an extent is 1,
// or a single-element operand against anything.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double value);
Tensor mul_scalar(const Tensor& x, double value);
/// value - x
Tensor rsub_scalar(double value, const Tensor& x);
Tensor neg(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Elementwise select: cond (same shape, non-zero = true) ? a : b. cond is a constant.
Tensor where(const Tensor& cond, const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Scalars (numel 1) into a 1-D tensor.
Tensor stack_scalars(const std::vector<Tensor>& scalars);

/// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

enum class Padding { zero, replicate };

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t groups = 1;
    Padding padding = Padding::zero;
};

/// x [B,Cin,H,W], weight [Cout, Cin/groups, kh, kw] with odd kernel extents,
/// bias [Cout] or undefined. "Same" padding of kernel/2 on each side; output
/// extent is (H - 1) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& options = {});

/// Depthwise convolution: weight [C,1,k,k].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        Padding padding = Padding::zero);

Tensor upsample_nearest2x(const Tensor& x);

/// 3x3 stride-1 max/min pooling with replicate padding.
Tensor max_pool3x3(const Tensor& x);
Tensor min_pool3x3(const Tensor& x);

/// Non-overlapping factor x factor average pooling; trailing rows/cols that do
/// not fill a window are dropped.
Tensor avg_pool(const Tensor& x, std::size_t factor);
/// [B,C,H,W] -> [B,C,1,1]
Tensor global_avg_pool(const Tensor& x);

/// Running statistics owned by a batch-norm layer.
struct BatchNormState {
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C]
    double momentum = 0.9;  // fraction of the old running value kept per update
    double eps = 1e-5;
};

/// Train mode with batch >= 2: per-channel batch statistics over (B,H,W) and a
/// running-stat update. Train mode with batch < 2: normalization over channels
/// per location (layer_norm_channels semantics), running stats untouched.
/// Eval mode: running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);

/// Normalizes over the channel axis at every (b, h, w); gamma, beta are [C].
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

} // namespace s2m
