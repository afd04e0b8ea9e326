#include "s2m/gradcheck.hpp"

#include "s2m/error.hpp"

#include <cmath>

namespace s2m {

namespace {

double scalar_value(const Tensor& y)
{
    if (y.numel() != 1) throw AutodiffError("grad_check: function must return a scalar, got " + shape_str(y.shape()));
    return y.item();
}

void update(GradCheckReport& r, std::size_t index, double analytic, double numeric)
{
    const double err = std::fabs(analytic - numeric) / (std::fabs(numeric) + 1e-8);
    if (err > r.max_rel_err || r.checked == 0) {
        r.max_rel_err = std::max(r.max_rel_err, err);
        r.worst_index = index;
        r.analytic = analytic;
        r.numeric = numeric;
    }
    ++r.checked;
}

} // namespace

GradCheckReport grad_check_report(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps)
{
    if (x.dtype() != Dtype::f64) throw ConfigError("grad_check requires f64 input");
    Tensor probe = x.clone();
    {
        NoGradGuard no_grad;
        const double a = scalar_value(f(probe));
        const double b = scalar_value(f(probe));
        if (a != b) throw AutodiffError("grad_check: function is not deterministic (two forward passes differ)");
    }

    Tensor leaf = x.clone();
    leaf.set_requires_grad(true);
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor y = f(leaf);
        scalar_value(y);
        tape.backward(y);
        auto g = leaf.grad();
        analytic.assign(g.begin(), g.end());
    }

    GradCheckReport report;
    NoGradGuard no_grad;
    auto values = probe.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double fp = scalar_value(f(probe));
        values[i] = saved - eps;
        const double fm = scalar_value(f(probe));
        values[i] = saved;
        update(report, i, analytic[i], (fp - fm) / (2.0 * eps));
    }
    return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps)
{
    return grad_check_report(f, x, eps).max_rel_err;
}

GradCheckReport grad_check_parameters(const std::function<Tensor()>& f, std::vector<Tensor> params, double eps,
                                      std::size_t stride)
{
    if (stride == 0) stride = 1;
    for (const Tensor& p : params) {
        if (p.dtype() != Dtype::f64) throw ConfigError("grad_check_parameters requires f64 parameters");
        if (!p.requires_grad()) throw ConfigError("grad_check_parameters: parameter does not require grad");
    }
    {
        NoGradGuard no_grad;
        if (scalar_value(f()) != scalar_value(f())) {
            throw AutodiffError("grad_check: function is not deterministic (two forward passes differ)");
        }
    }
    for (Tensor& p : params) p.zero_grad();
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor y = f();
        scalar_value(y);
        tape.backward(y);
        for (const Tensor& p : params) {
            auto g = p.grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }
    GradCheckReport report;
    NoGradGuard no_grad;
    std::size_t flat = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto values = params[k].mutable_data();
        for (std::size_t i = 0; i < values.size(); i += stride) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double fp = scalar_value(f());
            values[i] = saved - eps;
            const double fm = scalar_value(f());
            values[i] = saved;
            update(report, flat + i, analytic[k][i], (fp - fm) / (2.0 * eps));
        }
        flat += values.size();
    }
    return report;
}

} // namespace s2m
