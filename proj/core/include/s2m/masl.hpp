#pragma once

#include "s2m/tensor.hpp"

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace s2m {

/// Stabilizer shared by every ratio in the loss.
inline constexpr double kMaslEps = 1e-7;
inline constexpr std::size_t kMaslComponents = 5;

enum class LossComponent : std::size_t { core = 0, boundary = 1, structure = 2, scale = 3, texture = 4 };

std::string_view component_name(std::size_t index);

/// Ground-truth shape descriptors.
struct MorphFeatures {
    double tubularity = 0.0;    // eroded area / area, in [0, 1]
    double compactness = 0.0;   // 4 pi A / P^2 clamped to [0, 1]
    double irregularity = 0.0;  // L1 Laplacian of the boundary band / HW
    double scale = 0.0;         // area / HW
};

// Masks and predictions are [H, W] or [1, 1, H, W]; results are [1, 1, H, W].

/// 3x3 max pooling with replicate padding. Throws DataError for non-binary input.
Tensor morph_dilate(const Tensor& mask);
/// 3x3 min pooling with replicate padding. Throws DataError for non-binary input.
Tensor morph_erode(const Tensor& mask);
/// clip(dilate - erode, 0, 1)
Tensor boundary_band(const Tensor& mask);

MorphFeatures morph_features(const Tensor& mask);

/// Forward-difference L1 perimeter ||grad u||_1 over the valid region.
Tensor perimeter(const Tensor& u);

/// 0.4 Dice + 0.3 IoU + 0.3 boundary-weighted BCE with weight map 1 + lambda_b * band(y).
Tensor loss_core(const Tensor& y, const Tensor& p, double boundary_lambda = 5.0);
/// Weighted L1 gradient mismatch of (y - p) at average-pool scales 1, 2, 4.
Tensor loss_boundary(const Tensor& y, const Tensor& p);
/// |kappa(y) - kappa(p)|, kappa(u) = A(u) / (P(u)^2 + eps).
Tensor loss_structure(const Tensor& y, const Tensor& p);
/// Focusing exponent chosen by relative structure size.
double focal_gamma(double scale);
Tensor loss_focal_scale(const Tensor& y, const Tensor& p);
/// L1 second-difference mismatch along both axes, divided by HW.
Tensor loss_texture(const Tensor& y, const Tensor& p);

/// (core, boundary, structure, scale, texture) emphasis, each >= 1.
std::array<double, kMaslComponents> modulation(const MorphFeatures& f);

inline constexpr double kMaslWeightMin = 0.1;
inline constexpr double kMaslWeightMax = 10.0;

/// Five trainable component weights, stored as one [5] tensor.
struct MaslWeights {
    Tensor values;

    /// 1.0 for core, boundary, structure; 0.5 for scale and texture.
    static MaslWeights initial(Dtype dtype = Dtype::f64);
    static MaslWeights from(const std::array<double, kMaslComponents>& w, Dtype dtype = Dtype::f64);
    std::array<double, kMaslComponents> array() const;
};

/// Projection of every weight onto [0.1, 10]; returns a new detached tensor.
MaslWeights clip_weights(const MaslWeights& weights);
/// In-place projection of a trainable weight tensor (keeps its identity on the tape).
void clip_weights_inplace(MaslWeights& weights);

struct MaslOptions {
    double boundary_lambda = 5.0;
    std::array<bool, kMaslComponents> enabled{true, true, true, true, true};
    bool use_modulation = true;

    static MaslOptions core_only();
};

struct LossBreakdown {
    std::array<double, kMaslComponents> components{};
    std::array<double, kMaslComponents> alphas{};
    std::array<double, kMaslComponents> weights{};
    MorphFeatures features;
    double total = 0.0;
};

/// sum(w a L) / (sum(w a) + eps) over [5] losses and weights; a zero alpha drops a slot.
Tensor masl_combine(const Tensor& losses, const Tensor& weights, const std::array<double, kMaslComponents>& alphas);

/// Normalized sum(w a L) / (sum(w a) + eps) for one sample. Features come from
/// y only; the result is differentiable in p and the weights.
Tensor masl_total(const Tensor& y, const Tensor& p, const MaslWeights& weights, const MaslOptions& options = {},
                  LossBreakdown* breakdown = nullptr);

/// Mean of masl_total over a batch of [B,1,H,W] masks and predictions.
Tensor masl_batch(const Tensor& y, const Tensor& p, const MaslWeights& weights, const MaslOptions& options = {},
                  std::vector<LossBreakdown>* breakdowns = nullptr);

} // namespace s2m
