#include "s2m/layers.hpp"

#include "s2m/error.hpp"

#include <cmath>

namespace s2m {

Tensor ParameterSet::add(const std::string& name, Tensor t, ParamKind kind)
{
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
    if (t.dtype() != dtype_) t = t.to(dtype_);
    if (kind != ParamKind::buffer) t.set_requires_grad(true);
    entries_.push_back(ParamEntry{name, t, kind});
    return t;
}

const ParamEntry* ParameterSet::find(const std::string& name) const
{
    for (const auto& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

Tensor ParameterSet::get(const std::string& name) const
{
    const ParamEntry* e = find(name);
    if (e == nullptr) throw ConfigError("unknown parameter '" + name + "'");
    return e->tensor;
}

std::vector<Tensor> ParameterSet::trainable() const
{
    std::vector<Tensor> out;
    for (const auto& e : entries_) {
        if (e.trainable()) out.push_back(e.tensor);
    }
    return out;
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable()) n += e.tensor.numel();
    }
    return n;
}

void ParameterSet::zero_grad()
{
    for (auto& e : entries_) e.tensor.zero_grad();
}

Conv2d Conv2d::create(ParameterSet& params, const std::string& prefix, std::size_t in_channels,
                      std::size_t out_channels, std::size_t kernel, Rng& rng, std::size_t stride, std::size_t groups)
{
    if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0) {
        throw ConfigError(prefix + ": channels not divisible by groups");
    }
    const std::size_t cin_g = in_channels / groups;
    const double fan_in = static_cast<double>(cin_g * kernel * kernel);
    const double bound = std::sqrt(6.0 / fan_in);
    std::vector<double> w(out_channels * cin_g * kernel * kernel);
    for (double& v : w) v = rng.uniform(-bound, bound);
    Conv2d conv;
    conv.weight = params.add(prefix + ".weight",
                             Tensor::from_data({out_channels, cin_g, kernel, kernel}, std::move(w), params.dtype()),
                             ParamKind::weight);
    conv.bias = params.add(prefix + ".bias", Tensor::zeros({out_channels}, params.dtype()), ParamKind::bias);
    conv.options = Conv2dOptions{stride, groups, Padding::zero};
    return conv;
}

BatchNorm2d BatchNorm2d::create(ParameterSet& params, const std::string& prefix, std::size_t channels)
{
    BatchNorm2d bn;
    bn.gamma = params.add(prefix + ".gamma", Tensor::full({channels}, 1.0, params.dtype()), ParamKind::norm);
    bn.beta = params.add(prefix + ".beta", Tensor::zeros({channels}, params.dtype()), ParamKind::norm);
    bn.state.running_mean =
        params.add(prefix + ".running_mean", Tensor::zeros({channels}, params.dtype()), ParamKind::buffer);
    bn.state.running_var =
        params.add(prefix + ".running_var", Tensor::full({channels}, 1.0, params.dtype()), ParamKind::buffer);
    return bn;
}

LayerNorm2d LayerNorm2d::create(ParameterSet& params, const std::string& prefix, std::size_t channels)
{
    LayerNorm2d ln;
    ln.gamma = params.add(prefix + ".gamma", Tensor::full({channels}, 1.0, params.dtype()), ParamKind::norm);
    ln.beta = params.add(prefix + ".beta", Tensor::zeros({channels}, params.dtype()), ParamKind::norm);
    return ln;
}

} // namespace s2m
