#include "s2m/masl.hpp"

#include "s2m/error.hpp"
#include "s2m/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace s2m {

namespace {

Tensor as_image(const Tensor& t, const char* op)
{
    if (t.rank() == 2) return reshape(t, {1, 1, t.dim(0), t.dim(1)});
    if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) return t;
    throw ShapeError(std::string(op) + ": expected [H,W] or [1,1,H,W], got " + shape_str(t.shape()));
}

void require_binary(const Tensor& y, const char* op)
{
    for (double v : y.data()) {
        if (v != 0.0 && v != 1.0) {
            throw DataError(std::string(op) + ": mask is not binary (value " + std::to_string(v) +
                            "); threshold it first");
        }
    }
}

void require_same(const Tensor& y, const Tensor& p, const char* op)
{
    if (y.shape() != p.shape()) {
        throw ShapeError(std::string(op) + ": mask " + shape_str(y.shape()) + " and prediction " +
                         shape_str(p.shape()) + " differ");
    }
}

Tensor diff_x(const Tensor& u)
{
    const std::size_t w = u.dim(3);
    return sub(slice(u, 3, 1, w - 1), slice(u, 3, 0, w - 1));
}

Tensor diff_y(const Tensor& u)
{
    const std::size_t h = u.dim(2);
    return sub(slice(u, 2, 1, h - 1), slice(u, 2, 0, h - 1));
}

Tensor second_diff(const Tensor& u, std::size_t axis)
{
    const std::size_t n = u.dim(axis);
    return add(sub(slice(u, axis, 2, n - 2), mul_scalar(slice(u, axis, 1, n - 2), 2.0)), slice(u, axis, 0, n - 2));
}

Tensor kappa(const Tensor& u)
{
    const Tensor p = perimeter(u);
    return div(sum(u), add_scalar(square(p), kMaslEps));
}

Tensor clamp_probability(const Tensor& p) { return clamp(p, 1e-7, 1.0 - 1e-7); }

double area(const Tensor& y)
{
    double a = 0.0;
    for (double v : y.data()) a += v;
    return a;
}

} // namespace

std::string_view component_name(std::size_t index)
{
    static constexpr std::string_view names[kMaslComponents] = {"core", "bnd", "str", "sca", "tex"};
    return index < kMaslComponents ? names[index] : "?";
}

Tensor morph_dilate(const Tensor& mask)
{
    Tensor y = as_image(mask, "morph_dilate");
    require_binary(y, "morph_dilate");
    return max_pool3x3(y);
}

Tensor morph_erode(const Tensor& mask)
{
    Tensor y = as_image(mask, "morph_erode");
    require_binary(y, "morph_erode");
    return min_pool3x3(y);
}

Tensor boundary_band(const Tensor& mask)
{
    return clamp(sub(morph_dilate(mask), morph_erode(mask)), 0.0, 1.0);
}

Tensor perimeter(const Tensor& u)
{
    Tensor img = as_image(u, "perimeter");
    Tensor total = Tensor::scalar(0.0, img.dtype());
    if (img.dim(3) > 1) total = add(total, sum(abs(diff_x(img))));
    if (img.dim(2) > 1) total = add(total, sum(abs(diff_y(img))));
    return total;
}

MorphFeatures morph_features(const Tensor& mask)
{
    NoGradGuard no_grad;
    Tensor y = as_image(mask, "morph_features");
    require_binary(y, "morph_features");
    const double hw = static_cast<double>(y.dim(2) * y.dim(3));
    const double a = area(y);
    MorphFeatures f;
    f.scale = a / hw;
    if (a > 0.0) {
        f.tubularity = area(morph_erode(y)) / (a + kMaslEps);
        const double p = perimeter(y).item();
        f.compactness = std::clamp(4.0 * std::numbers::pi * a / (p * p + kMaslEps), 0.0, 1.0);
    }
    const Tensor laplacian = Tensor::from_data({1, 1, 3, 3}, {0, 1, 0, 1, -4, 1, 0, 1, 0}, y.dtype());
    const Tensor lap = conv2d(boundary_band(y), laplacian, Tensor{});
    double l1 = 0.0;
    for (double v : lap.data()) l1 += std::fabs(v);
    f.irregularity = l1 / hw;
    return f;
}

Tensor loss_core(const Tensor& y_in, const Tensor& p_in, double boundary_lambda)
{
    Tensor y = as_image(y_in, "loss_core");
    Tensor p = as_image(p_in, "loss_core");
    require_same(y, p, "loss_core");
    for (double v : p.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw NumericError("loss_core: prediction value " + std::to_string(v) + " outside [0,1]");
    }
    const Tensor inter = sum(mul(y, p));
    const Tensor sy = sum(y);
    const Tensor sp = sum(p);
    const Tensor dice =
        rsub_scalar(1.0, div(add_scalar(mul_scalar(inter, 2.0), kMaslEps), add_scalar(add(sy, sp), kMaslEps)));
    const Tensor iou = rsub_scalar(1.0, div(add_scalar(inter, kMaslEps), add_scalar(sub(add(sy, sp), inter), kMaslEps)));

    Tensor weight_map;
    {
        NoGradGuard no_grad;
        weight_map = add_scalar(mul_scalar(boundary_band(y), boundary_lambda), 1.0);
    }
    const Tensor pc = clamp_probability(p);
    const Tensor bce = neg(add(mul(y, log(pc)), mul(rsub_scalar(1.0, y), log(rsub_scalar(1.0, pc)))));
    const Tensor wbce = mean(mul(weight_map, bce));
    return add(add(mul_scalar(dice, 0.4), mul_scalar(iou, 0.3)), mul_scalar(wbce, 0.3));
}

Tensor loss_boundary(const Tensor& y_in, const Tensor& p_in)
{
    Tensor y = as_image(y_in, "loss_boundary");
    Tensor p = as_image(p_in, "loss_boundary");
    require_same(y, p, "loss_boundary");
    if (y.dim(2) < 4 || y.dim(3) < 4) {
        throw ShapeError("loss_boundary: needs H, W >= 4 for the scale-4 term, got " + shape_str(y.shape()));
    }
    static constexpr std::size_t scales[] = {1, 2, 4};
    static constexpr double omega[] = {0.5, 0.3, 0.2};
    const Tensor d = sub(y, p);
    Tensor total = Tensor::scalar(0.0, d.dtype());
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor dq = avg_pool(d, scales[i]);
        Tensor term = Tensor::scalar(0.0, d.dtype());
        if (dq.dim(3) > 1) term = add(term, mean(abs(diff_x(dq))));
        if (dq.dim(2) > 1) term = add(term, mean(abs(diff_y(dq))));
        total = add(total, mul_scalar(term, omega[i]));
    }
    return total;
}

Tensor loss_structure(const Tensor& y_in, const Tensor& p_in)
{
    Tensor y = as_image(y_in, "loss_structure");
    Tensor p = as_image(p_in, "loss_structure");
    require_same(y, p, "loss_structure");
    Tensor ky;
    {
        NoGradGuard no_grad;
        ky = kappa(y);
    }
    return abs(sub(ky, kappa(p)));
}

double focal_gamma(double scale)
{
    if (scale < 0.05) return 3.0;
    if (scale < 0.2) return 2.0;
    return 1.5;
}

Tensor loss_focal_scale(const Tensor& y_in, const Tensor& p_in)
{
    Tensor y = as_image(y_in, "loss_focal_scale");
    Tensor p = as_image(p_in, "loss_focal_scale");
    require_same(y, p, "loss_focal_scale");
    const double gamma = focal_gamma(area(y) / static_cast<double>(y.numel()));
    const Tensor pc = clamp_probability(p);
    const Tensor pt = add(mul(y, pc), mul(rsub_scalar(1.0, y), rsub_scalar(1.0, pc)));
    return mean(neg(mul(pow(rsub_scalar(1.0, pt), gamma), log(pt))));
}

Tensor loss_texture(const Tensor& y_in, const Tensor& p_in)
{
    Tensor y = as_image(y_in, "loss_texture");
    Tensor p = as_image(p_in, "loss_texture");
    require_same(y, p, "loss_texture");
    if (y.dim(2) < 3 || y.dim(3) < 3) {
        throw ShapeError("loss_texture: needs H, W >= 3, got " + shape_str(y.shape()));
    }
    const double hw = static_cast<double>(y.numel());
    const Tensor d = sub(y, p);
    return mul_scalar(add(sum(abs(second_diff(d, 3))), sum(abs(second_diff(d, 2)))), 1.0 / hw);
}

std::array<double, kMaslComponents> modulation(const MorphFeatures& f)
{
    return {
        1.0 + 0.5 * f.compactness,
        1.0 + 1.5 * f.tubularity + f.compactness,
        1.0 + f.tubularity,
        1.0 + 1.5 * f.irregularity,
        1.0 + f.irregularity,
    };
}

MaslWeights MaslWeights::initial(Dtype dtype)
{
    return from({1.0, 1.0, 1.0, 0.5, 0.5}, dtype);
}

MaslWeights MaslWeights::from(const std::array<double, kMaslComponents>& w, Dtype dtype)
{
    return MaslWeights{Tensor::from_data({kMaslComponents}, std::vector<double>(w.begin(), w.end()), dtype)};
}

std::array<double, kMaslComponents> MaslWeights::array() const
{
    std::array<double, kMaslComponents> out{};
    auto v = values.data();
    if (v.size() != kMaslComponents) throw ShapeError("MaslWeights: expected 5 values, got " + shape_str(values.shape()));
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

MaslWeights clip_weights(const MaslWeights& weights)
{
    auto w = weights.array();
    for (double& v : w) v = std::clamp(v, kMaslWeightMin, kMaslWeightMax);
    return MaslWeights::from(w, weights.values.dtype());
}

void clip_weights_inplace(MaslWeights& weights)
{
    for (double& v : weights.values.mutable_data()) v = std::clamp(v, kMaslWeightMin, kMaslWeightMax);
    weights.values.normalize_storage();
}

MaslOptions MaslOptions::core_only()
{
    MaslOptions o;
    o.enabled = {true, false, false, false, false};
    return o;
}

Tensor masl_combine(const Tensor& losses, const Tensor& weights, const std::array<double, kMaslComponents>& alphas)
{
    if (losses.shape() != Shape{kMaslComponents} || weights.shape() != Shape{kMaslComponents}) {
        throw ShapeError("masl_combine: expected [5] losses and weights, got " + shape_str(losses.shape()) + " and " +
                         shape_str(weights.shape()));
    }
    const Tensor scaled =
        mul(weights, Tensor::from_data({kMaslComponents}, {alphas.begin(), alphas.end()}, weights.dtype()));
    return div(sum(mul(scaled, losses)), add_scalar(sum(scaled), kMaslEps));
}

Tensor masl_total(const Tensor& y_in, const Tensor& p_in, const MaslWeights& weights, const MaslOptions& options,
                  LossBreakdown* breakdown)
{
    Tensor y = as_image(y_in, "masl_total");
    Tensor p = as_image(p_in, "masl_total");
    require_same(y, p, "masl_total");
    const auto w = weights.array();
    for (double v : w) {
        if (!(v >= kMaslWeightMin && v <= kMaslWeightMax)) {
            throw ConfigError("masl_total: weight " + std::to_string(v) + " outside [0.1, 10]");
        }
    }
    const MorphFeatures features = morph_features(y);
    std::array<double, kMaslComponents> alpha{1.0, 1.0, 1.0, 1.0, 1.0};
    if (options.use_modulation) alpha = modulation(features);

    std::vector<Tensor> components;
    std::vector<double> emphasis;  // alpha_i on enabled slots, 0 elsewhere
    for (std::size_t i = 0; i < kMaslComponents; ++i) {
        if (!options.enabled[i]) {
            components.push_back(Tensor::scalar(0.0, p.dtype()));
            emphasis.push_back(0.0);
            continue;
        }
        switch (static_cast<LossComponent>(i)) {
        case LossComponent::core: components.push_back(loss_core(y, p, options.boundary_lambda)); break;
        case LossComponent::boundary: components.push_back(loss_boundary(y, p)); break;
        case LossComponent::structure: components.push_back(loss_structure(y, p)); break;
        case LossComponent::scale: components.push_back(loss_focal_scale(y, p)); break;
        case LossComponent::texture: components.push_back(loss_texture(y, p)); break;
        }
        emphasis.push_back(alpha[i]);
    }
    const Tensor losses = stack_scalars(components);
    std::array<double, kMaslComponents> active{};
    std::copy(emphasis.begin(), emphasis.end(), active.begin());
    const Tensor total = masl_combine(losses, weights.values, active);

    if (breakdown) {
        breakdown->features = features;
        breakdown->alphas = alpha;
        breakdown->weights = w;
        for (std::size_t i = 0; i < kMaslComponents; ++i) breakdown->components[i] = losses[i];
        breakdown->total = total.item();
    }
    return total;
}

Tensor masl_batch(const Tensor& y, const Tensor& p, const MaslWeights& weights, const MaslOptions& options,
                  std::vector<LossBreakdown>* breakdowns)
{
    if (y.rank() != 4 || y.dim(1) != 1 || y.shape() != p.shape()) {
        throw ShapeError("masl_batch: expected matching [B,1,H,W] tensors, got " + shape_str(y.shape()) + " and " +
                         shape_str(p.shape()));
    }
    const std::size_t batch = y.dim(0);
    if (batch == 0) throw ShapeError("masl_batch: empty batch");
    if (breakdowns) breakdowns->clear();
    Tensor total = Tensor::scalar(0.0, p.dtype());
    for (std::size_t b = 0; b < batch; ++b) {
        LossBreakdown bd;
        total = add(total, masl_total(slice(y, 0, b, 1), slice(p, 0, b, 1), weights, options, breakdowns ? &bd : nullptr));
        if (breakdowns) breakdowns->push_back(bd);
    }
    return mul_scalar(total, 1.0 / static_cast<double>(batch));
}

} // namespace s2m
