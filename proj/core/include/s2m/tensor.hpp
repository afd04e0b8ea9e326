#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace s2m {

using Shape = std::vector<std::size_t>;

/// Storage precision. Arithmetic always runs in double; f32 tensors have their
/// values rounded to the nearest float whenever they are written.
enum class Dtype { f32, f64 };

std::string_view dtype_name(Dtype dtype);
Dtype parse_dtype(std::string_view name);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    Dtype dtype = Dtype::f64;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;

    std::vector<double>& grad_buffer()
    {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

} // namespace detail

/// Dense row-major N-D array with optional gradient tracking.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for a
/// value snapshot. Shapes follow the batch, channel, height, width layout for
/// image data.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, Dtype dtype = Dtype::f64);
    static Tensor full(Shape shape, double value, Dtype dtype = Dtype::f64);
    static Tensor from_data(Shape shape, std::vector<double> values, Dtype dtype = Dtype::f64);
    static Tensor scalar(double value, Dtype dtype = Dtype::f64);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    Dtype dtype() const;

    std::span<const double> data() const;
    /// Direct write access; bypasses the tape, intended for parameter updates and initialization.
    std::span<double> mutable_data();
    /// Re-rounds values to the storage precision after writes through mutable_data().
    void normalize_storage();

    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Deep copy detached from any tape.
    Tensor clone() const;
    /// Same values, cast to another storage precision, detached.
    Tensor to(Dtype dtype) const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Receives an op's output gradient and accumulates into the op's inputs.
using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Append-only record of differentiable operations.
///
/// Constructing a Tape makes it the active tape of the current thread until it
/// is destroyed; tapes nest. Ops record a node only when an active tape exists
/// and at least one input requires a gradient.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar root. Leaf gradients accumulate; each node
    /// runs once. A tape supports a single backward pass.
    void backward(const Tensor& root);

    struct Node {
        std::string op;
        std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
        std::shared_ptr<detail::TensorImpl> output;
        BackwardFn backward;
    };

    void record(Node node);
    const std::vector<Node>& nodes() const { return nodes_; }

private:
    std::vector<Node> nodes_;
    Tape* previous_ = nullptr;
    bool consumed_ = false;
};

/// backward() on the active tape.
void backward(const Tensor& root);

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Writes "dtype d0 d1 ...\n" followed by little-endian raw values in the tensor's dtype.
void dump_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor_dump(const std::string& path);

} // namespace s2m
