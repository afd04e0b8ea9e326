#include "s2m/decoder.hpp"

#include "s2m/error.hpp"

namespace s2m {

Tensor soft_route(const Tensor& r, const Tensor& b, const Tensor& beta)
{
    if (r.shape() != b.shape()) {
        throw ShapeError("soft_route: region " + shape_str(r.shape()) + " and boundary " + shape_str(b.shape()) +
                         " differ");
    }
    for (double v : beta.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw NumericError("soft_route: beta value " + std::to_string(v) + " outside [0,1]");
    }
    return add(mul(r, rsub_scalar(1.0, beta)), mul(b, beta));
}

DecoderStage DecoderStage::create(ParameterSet& params, const std::string& prefix, std::size_t prev_channels,
                                  std::size_t skip_channels, std::size_t out_channels, Rng& rng, bool use_boundary)
{
    DecoderStage s;
    s.use_boundary_ = use_boundary;
    const std::size_t c = out_channels;
    s.region1 = Conv2d::create(params, prefix + ".region1", prev_channels + skip_channels, c, 3, rng);
    s.region1_bn = BatchNorm2d::create(params, prefix + ".region1_bn", c);
    s.region2 = Conv2d::create(params, prefix + ".region2", c, c, 3, rng);
    s.region2_bn = BatchNorm2d::create(params, prefix + ".region2_bn", c);
    if (use_boundary) {
        s.boundary_pre = Conv2d::create(params, prefix + ".boundary_pre", c, c, 3, rng);
        s.beta_head = Conv2d::create(params, prefix + ".beta_head", c, 1, 1, rng);
        s.boundary_post = Conv2d::create(params, prefix + ".boundary_post", c, c, 3, rng);
        s.boundary_bn = BatchNorm2d::create(params, prefix + ".boundary_bn", c);
    }
    s.project = Conv2d::create(params, prefix + ".project", c, c, 1, rng);
    s.project_bn = BatchNorm2d::create(params, prefix + ".project_bn", c);
    return s;
}

DecoderStageOutput DecoderStage::forward(const Tensor& d_prev, const Tensor& skip, const RunContext& ctx)
{
    const Tensor up = upsample_nearest2x(d_prev);
    if (up.rank() != 4 || skip.rank() != 4 || up.dim(0) != skip.dim(0) || up.dim(2) != skip.dim(2) ||
        up.dim(3) != skip.dim(3)) {
        throw ShapeError("decoder_stage: upsampled input " + shape_str(up.shape()) + " does not match skip " +
                         shape_str(skip.shape()));
    }
    DecoderStageOutput out;
    const Tensor v = concat({up, skip}, 1);
    out.region = elu(region2_bn(region2(elu(region1_bn(region1(v), ctx))), ctx));
    if (use_boundary_) {
        const Tensor b1 = elu(boundary_pre(out.region));
        out.beta = sigmoid(beta_head(b1));
        out.boundary = elu(boundary_bn(boundary_post(mul(b1, out.beta)), ctx));
        out.routed = soft_route(out.region, out.boundary, out.beta);
    } else {
        out.routed = out.region;
    }
    out.d_next = elu(project_bn(project(out.routed), ctx));
    return out;
}

} // namespace s2m
