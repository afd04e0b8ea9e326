#include "s2m/tensor.hpp"

#include "le_bytes.hpp"

#include "s2m/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace s2m {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;

void round_storage(std::vector<double>& values, Dtype dtype)
{
    if (dtype != Dtype::f32) return;
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl)
{
    if (!impl) throw Error("use of undefined tensor");
    return *impl;
}

} // namespace

std::string_view dtype_name(Dtype dtype)
{
    return dtype == Dtype::f32 ? "f32" : "f64";
}

Dtype parse_dtype(std::string_view name)
{
    if (name == "f32" || name == "float32") return Dtype::f32;
    if (name == "f64" || name == "float64") return Dtype::f64;
    throw ConfigError("unknown dtype '" + std::string(name) + "'");
}

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, Dtype dtype)
{
    return full(std::move(shape), 0.0, dtype);
}

Tensor Tensor::full(Shape shape, double value, Dtype dtype)
{
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->data.assign(shape_numel(shape), value);
    impl->shape = std::move(shape);
    impl->dtype = dtype;
    round_storage(impl->data, dtype);
    return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, Dtype dtype)
{
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->dtype = dtype;
    round_storage(impl->data, dtype);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, Dtype dtype)
{
    return full({1}, value, dtype);
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const
{
    const Shape& s = shape();
    if (axis >= s.size()) throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }
Dtype Tensor::dtype() const { return checked(impl_).dtype; }

std::span<const double> Tensor::data() const { return checked(impl_).data; }
std::span<double> Tensor::mutable_data() { return checked(impl_).data; }

void Tensor::normalize_storage()
{
    auto& impl = checked(impl_);
    round_storage(impl.data, impl.dtype);
}

double Tensor::item() const
{
    const auto& impl = checked(impl_);
    if (impl.data.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(impl.shape) + " is not a scalar");
    return impl.data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on)
{
    auto& impl = checked(impl_);
    if (!impl.is_leaf) throw AutodiffError("set_requires_grad: only leaf tensors can be marked");
    impl.requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).is_leaf; }
bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const
{
    auto& impl = checked(impl_);
    return impl.grad_buffer();
}

std::span<double> Tensor::mutable_grad() { return checked(impl_).grad_buffer(); }

void Tensor::zero_grad()
{
    auto& impl = checked(impl_);
    impl.grad.clear();
}

Tensor Tensor::clone() const
{
    const auto& impl = checked(impl_);
    return from_data(impl.shape, impl.data, impl.dtype);
}

Tensor Tensor::to(Dtype dtype) const
{
    const auto& impl = checked(impl_);
    return from_data(impl.shape, impl.data, dtype);
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_grad_enabled ? g_active_tape : nullptr; }

void Tape::record(Node node)
{
    if (consumed_) throw AutodiffError("tape already consumed by backward(); start a new Tape");
    nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& root)
{
    if (!root.defined()) throw AutodiffError("backward: undefined root");
    if (root.numel() != 1) throw AutodiffError("backward: root must be a scalar, got shape " + shape_str(root.shape()));
    if (consumed_) throw AutodiffError("backward: tape already consumed");

    const auto& root_impl = root.impl();
    std::size_t start = nodes_.size();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].output == root_impl) {
            start = i;
            break;
        }
    }
    if (start == nodes_.size()) {
        throw AutodiffError("backward: root was not produced on this tape (detached graph)");
    }
    consumed_ = true;
    root_impl->grad_buffer()[0] += 1.0;
    for (std::size_t i = start + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.output->grad.empty()) continue;
        node.backward(node.output->grad);
    }
}

void backward(const Tensor& root)
{
    Tape* tape = g_active_tape;
    if (tape == nullptr) throw AutodiffError("backward: no active tape");
    tape->backward(root);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void dump_tensor(const Tensor& t, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << dtype_name(t.dtype());
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    std::vector<unsigned char> bytes;
    detail::append_le(bytes, t.data(), t.dtype());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
}

Tensor load_tensor_dump(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string dtype_token;
    hs >> dtype_token;
    Dtype dtype = parse_dtype(dtype_token);
    Shape shape;
    std::size_t d = 0;
    while (hs >> d) shape.push_back(d);
    const std::size_t count = shape_numel(shape);
    std::vector<unsigned char> bytes(count * detail::dtype_width(dtype));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw DataError("truncated tensor dump '" + path + "'");
    return Tensor::from_data(std::move(shape), detail::decode_le(bytes.data(), count, dtype), dtype);
}

} // namespace s2m
