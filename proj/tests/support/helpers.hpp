#pragma once

#include "oracles.hpp"

#include "s2m/rng.hpp"
#include "s2m/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace testing {

inline s2m::Tensor random_tensor(s2m::Shape shape, s2m::Rng& rng, double lo = -1.0, double hi = 1.0)
{
    std::vector<double> v(s2m::shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return s2m::Tensor::from_data(std::move(shape), std::move(v));
}

inline s2m::Tensor random_mask(std::size_t h, std::size_t w, s2m::Rng& rng, double fill = 0.5)
{
    std::vector<double> v(h * w);
    for (double& x : v) x = rng.bernoulli(fill) ? 1.0 : 0.0;
    return s2m::Tensor::from_data({h, w}, std::move(v));
}

inline oracle::Grid grid(const s2m::Tensor& t)
{
    const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
    return oracle::Grid(h, w, std::vector<double>(t.data().begin(), t.data().end()));
}

inline std::vector<double> values(const s2m::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double m = a.size() == b.size() ? 0.0 : INFINITY;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const s2m::Tensor& a, const std::vector<double>& b) { return max_abs_diff(a.data(), b); }

}  // namespace testing
