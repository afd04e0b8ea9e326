#pragma once

#include "s2m/error.hpp"
#include "s2m/tensor.hpp"

#include <initializer_list>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace s2m::detail {

using ImplPtr = std::shared_ptr<TensorImpl>;

/// f32 only when every input is f32.
Dtype promote(std::initializer_list<const Tensor*> inputs);
Dtype promote(const std::vector<Tensor>& inputs);

bool any_requires_grad(const std::vector<ImplPtr>& inputs);

/// Builds an op output: rounds to storage precision, rejects non-finite values,
/// and records `backward` when recording is on and an input requires a gradient.
Tensor finish(std::string_view op, Shape shape, std::vector<double> values, Dtype dtype,
              std::vector<ImplPtr> inputs, BackwardFn backward);

/// Validated output storage (rounded, finite-checked) not yet attached to a tape.
ImplPtr make_output(std::string_view op, Shape shape, std::vector<double> values, Dtype dtype);
/// Records `backward` for `output` when recording is on and an input requires a gradient.
Tensor attach(std::string_view op, ImplPtr output, std::vector<ImplPtr> inputs, BackwardFn backward);

/// Gradient buffer of an input, or nullptr when it does not take a gradient.
inline double* grad_of(const ImplPtr& impl)
{
    return impl->requires_grad ? impl->grad_buffer().data() : nullptr;
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b, std::string_view what = {});
[[noreturn]] void shape_error(std::string_view op, const Shape& a, std::string_view what);

void require_rank(std::string_view op, const Tensor& t, std::size_t rank);

} // namespace s2m::detail
