#pragma once

#include "s2m/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace s2m {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;  // flat index across all checked elements
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. The error of one element is
/// |analytic - numeric| / (|numeric| + 1e-8); the report carries the maximum.
///
/// f must be deterministic (evaluated twice up front; a mismatch throws
/// AutodiffError) and x must be f64.
GradCheckReport grad_check_report(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-6);

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-6);

/// Same comparison for leaf parameters captured by f. Parameters are perturbed
/// in place and restored. `stride` checks every stride-th element of each
/// parameter to bound cost on large tensors.
GradCheckReport grad_check_parameters(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                      double eps = 1e-6, std::size_t stride = 1);

} // namespace s2m
