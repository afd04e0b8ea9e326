#include "s2m/ops.hpp"

#include "op_support.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace s2m {

namespace detail {

Dtype promote(std::initializer_list<const Tensor*> inputs)
{
    for (const Tensor* t : inputs) {
        if (t && t->defined() && t->dtype() == Dtype::f64) return Dtype::f64;
    }
    return Dtype::f32;
}

Dtype promote(const std::vector<Tensor>& inputs)
{
    for (const Tensor& t : inputs) {
        if (t.dtype() == Dtype::f64) return Dtype::f64;
    }
    return inputs.empty() ? Dtype::f64 : Dtype::f32;
}

bool any_requires_grad(const std::vector<ImplPtr>& inputs)
{
    return std::any_of(inputs.begin(), inputs.end(), [](const ImplPtr& p) { return p && p->requires_grad; });
}

ImplPtr make_output(std::string_view op, Shape shape, std::vector<double> values, Dtype dtype)
{
    // v - v is NaN exactly for infinities and NaNs; the flag loop vectorizes.
    bool finite = true;
    if (dtype == Dtype::f32) {
        for (double& v : values) {
            v = static_cast<double>(static_cast<float>(v));
            finite &= (v - v) == 0.0;
        }
    } else {
        for (double v : values) finite &= (v - v) == 0.0;
    }
    for (std::size_t i = 0; !finite && i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            std::ostringstream os;
            os << op << ": non-finite output (" << values[i] << " at flat index " << i << ", shape " << shape_str(shape)
               << ")";
            throw NumericError(os.str());
        }
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->dtype = dtype;
    return impl;
}

Tensor attach(std::string_view op, ImplPtr output, std::vector<ImplPtr> inputs, BackwardFn backward)
{
    Tape* tape = Tape::active();
    std::erase(inputs, nullptr);
    if (tape && any_requires_grad(inputs)) {
        output->requires_grad = true;
        output->is_leaf = false;
        tape->record(Tape::Node{std::string(op), std::move(inputs), output, std::move(backward)});
    }
    return Tensor(std::move(output));
}

Tensor finish(std::string_view op, Shape shape, std::vector<double> values, Dtype dtype, std::vector<ImplPtr> inputs,
              BackwardFn backward)
{
    return attach(op, make_output(op, std::move(shape), std::move(values), dtype), std::move(inputs),
                  std::move(backward));
}

void shape_error(std::string_view op, const Shape& a, const Shape& b, std::string_view what)
{
    std::ostringstream os;
    os << op << ": incompatible shapes " << shape_str(a) << " and " << shape_str(b);
    if (!what.empty()) os << " (" << what << ")";
    throw ShapeError(os.str());
}

void shape_error(std::string_view op, const Shape& a, std::string_view what)
{
    std::ostringstream os;
    os << op << ": invalid shape " << shape_str(a) << " (" << what << ")";
    throw ShapeError(os.str());
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank)
{
    if (t.rank() != rank) shape_error(op, t.shape(), "expected rank " + std::to_string(rank));
}

} // namespace detail

using detail::finish;
using detail::grad_of;
using detail::ImplPtr;

namespace {

// Offsets of each output element into a and b under broadcasting.
struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_index;
    std::vector<std::size_t> b_index;
    bool trivial = false;  // identical shapes
};

Broadcast broadcast(std::string_view op, const Shape& a, const Shape& b)
{
    Broadcast bc;
    if (a == b) {
        bc.out = a;
        bc.trivial = true;
        return bc;
    }
    const std::size_t na = shape_numel(a);
    const std::size_t nb = shape_numel(b);
    if (nb == 1 || na == 1) {
        bc.out = nb == 1 ? a : b;
        const std::size_t n = shape_numel(bc.out);
        bc.a_index.resize(n);
        bc.b_index.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            bc.a_index[i] = na == 1 ? 0 : i;
            bc.b_index[i] = nb == 1 ? 0 : i;
        }
        return bc;
    }
    if (a.size() != b.size()) detail::shape_error(op, a, b, "broadcast needs equal rank");
    const std::size_t rank = a.size();
    bc.out.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (a[i] == b[i] || b[i] == 1) bc.out[i] = a[i];
        else if (a[i] == 1) bc.out[i] = b[i];
        else detail::shape_error(op, a, b, "extent mismatch on axis " + std::to_string(i));
    }
    std::vector<std::size_t> sa(rank), sb(rank);
    std::size_t ra = 1, rb = 1;
    for (std::size_t i = rank; i-- > 0;) {
        sa[i] = a[i] == 1 ? 0 : ra;
        sb[i] = b[i] == 1 ? 0 : rb;
        ra *= a[i];
        rb *= b[i];
    }
    const std::size_t n = shape_numel(bc.out);
    bc.a_index.resize(n);
    bc.b_index.resize(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bc.a_index[i] = oa;
        bc.b_index[i] = ob;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < bc.out[d]) break;
            oa -= sa[d] * idx[d];
            ob -= sb[d] * idx[d];
            idx[d] = 0;
        }
    }
    return bc;
}

enum class BinaryKind { add, sub, mul, div };

constexpr std::string_view binary_name(BinaryKind k)
{
    switch (k) {
    case BinaryKind::add: return "add";
    case BinaryKind::sub: return "sub";
    case BinaryKind::mul: return "mul";
    case BinaryKind::div: return "div";
    }
    return "?";
}

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b)
{
    const std::string_view op = binary_name(kind);
    auto bc = std::make_shared<Broadcast>(broadcast(op, a.shape(), b.shape()));
    const std::size_t n = shape_numel(bc->out);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(n);
    auto ia = [&](std::size_t i) { return bc->trivial ? i : bc->a_index[i]; };
    auto ib = [&](std::size_t i) { return bc->trivial ? i : bc->b_index[i]; };
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[ia(i)], y = bv[ib(i)];
        switch (kind) {
        case BinaryKind::add: out[i] = x + y; break;
        case BinaryKind::sub: out[i] = x - y; break;
        case BinaryKind::mul: out[i] = x * y; break;
        case BinaryKind::div: out[i] = x / y; break;
        }
    }
    ImplPtr pa = a.impl(), pb = b.impl();
    return finish(op, bc->out, std::move(out), detail::promote({&a, &b}), {pa, pb},
                  [kind, bc, pa, pb](std::span<const double> g) {
                      double* ga = grad_of(pa);
                      double* gb = grad_of(pb);
                      const auto& A = pa->data;
                      const auto& B = pb->data;
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          const std::size_t ja = bc->trivial ? i : bc->a_index[i];
                          const std::size_t jb = bc->trivial ? i : bc->b_index[i];
                          switch (kind) {
                          case BinaryKind::add:
                              if (ga) ga[ja] += g[i];
                              if (gb) gb[jb] += g[i];
                              break;
                          case BinaryKind::sub:
                              if (ga) ga[ja] += g[i];
                              if (gb) gb[jb] -= g[i];
                              break;
                          case BinaryKind::mul:
                              if (ga) ga[ja] += g[i] * B[jb];
                              if (gb) gb[jb] += g[i] * A[ja];
                              break;
                          case BinaryKind::div:
                              if (ga) ga[ja] += g[i] / B[jb];
                              if (gb) gb[jb] -= g[i] * A[ja] / (B[jb] * B[jb]);
                              break;
                          }
                      }
                  });
}

// Elementwise unary op given value and derivative functions. The derivative
// receives (x, y) so ops like sigmoid can reuse their output.
template <class Fwd, class Deriv>
Tensor unary(std::string_view op, const Tensor& x, Fwd fwd, Deriv deriv)
{
    auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    ImplPtr px = x.impl();
    auto py = detail::make_output(op, x.shape(), std::move(out), x.dtype());
    // Weak reference: the node is owned by the tape and must not keep its own output alive in a cycle.
    std::weak_ptr<detail::TensorImpl> wy = py;
    return detail::attach(op, py, {px}, [px, wy, deriv](std::span<const double> g) {
        double* gx = grad_of(px);
        if (!gx) return;
        auto y = wy.lock();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(px->data[i], y->data[i]);
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryKind::div, a, b); }

Tensor add_scalar(const Tensor& x, double value)
{
    return unary("add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double value)
{
    return unary("mul_scalar", x, [value](double v) { return v * value; }, [value](double, double) { return value; });
}

Tensor rsub_scalar(double value, const Tensor& x)
{
    return unary("rsub_scalar", x, [value](double v) { return value - v; }, [](double, double) { return -1.0; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor sigmoid(const Tensor& x)
{
    return unary(
        "sigmoid", x,
        [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor elu(const Tensor& x, double alpha)
{
    return unary(
        "elu", x, [alpha](double v) { return v > 0 ? v : alpha * std::expm1(v); },
        [alpha](double v, double y) { return v > 0 ? 1.0 : y + alpha; });
}

Tensor relu(const Tensor& x)
{
    return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope)
{
    return unary(
        "leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
        [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor abs(const Tensor& x)
{
    return unary(
        "abs", x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x)
{
    return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x)
{
    return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor pow(const Tensor& x, double exponent)
{
    return unary(
        "pow", x, [exponent](double v) { return std::pow(v, exponent); },
        [exponent](double v, double) { return exponent == 0.0 ? 0.0 : exponent * std::pow(v, exponent - 1.0); });
}

Tensor square(const Tensor& x)
{
    return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x)
{
    return unary("sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& x, double lo, double hi)
{
    if (lo > hi) throw ConfigError("clamp: lo > hi");
    return unary(
        "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor where(const Tensor& cond, const Tensor& a, const Tensor& b)
{
    if (cond.shape() != a.shape()) detail::shape_error("where", cond.shape(), a.shape());
    if (a.shape() != b.shape()) detail::shape_error("where", a.shape(), b.shape());
    auto c = cond.data();
    auto av = a.data();
    auto bv = b.data();
    auto mask = std::make_shared<std::vector<bool>>(c.size());
    std::vector<double> out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        (*mask)[i] = c[i] != 0.0;
        out[i] = (*mask)[i] ? av[i] : bv[i];
    }
    ImplPtr pa = a.impl(), pb = b.impl();
    return finish("where", a.shape(), std::move(out), detail::promote({&a, &b}), {pa, pb},
                  [mask, pa, pb](std::span<const double> g) {
                      double* ga = grad_of(pa);
                      double* gb = grad_of(pb);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          if ((*mask)[i]) {
                              if (ga) ga[i] += g[i];
                          } else if (gb) {
                              gb[i] += g[i];
                          }
                      }
                  });
}

Tensor sum(const Tensor& x)
{
    auto xv = x.data();
    const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
    ImplPtr px = x.impl();
    return finish("sum", {1}, {total}, x.dtype(), {px}, [px](std::span<const double> g) {
        if (double* gx = grad_of(px)) {
            for (std::size_t i = 0; i < px->data.size(); ++i) gx[i] += g[0];
        }
    });
}

Tensor mean(const Tensor& x)
{
    if (x.numel() == 0) detail::shape_error("mean", x.shape(), "empty tensor");
    auto xv = x.data();
    const double n = static_cast<double>(xv.size());
    const double total = std::accumulate(xv.begin(), xv.end(), 0.0) / n;
    ImplPtr px = x.impl();
    return finish("mean", {1}, {total}, x.dtype(), {px}, [px, n](std::span<const double> g) {
        if (double* gx = grad_of(px)) {
            for (std::size_t i = 0; i < px->data.size(); ++i) gx[i] += g[0] / n;
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape_numel(shape) != x.numel()) detail::shape_error("reshape", x.shape(), shape);
    auto xv = x.data();
    ImplPtr px = x.impl();
    return finish("reshape", std::move(shape), std::vector<double>(xv.begin(), xv.end()), x.dtype(), {px},
                  [px](std::span<const double> g) {
                      if (double* gx = grad_of(px)) {
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      }
                  });
}

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis)
{
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

} // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis)
{
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) detail::shape_error("concat", first, "axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) detail::shape_error("concat", first, s);
        out_shape[axis] += s[axis];
    }
    const AxisSplit os = split_axis(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    std::vector<ImplPtr> inputs;
    auto offsets = std::make_shared<std::vector<std::size_t>>();
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const AxisSplit ps = split_axis(p.shape(), axis);
        auto pv = p.data();
        const std::size_t block = ps.extent * ps.inner;
        for (std::size_t o = 0; o < ps.outer; ++o) {
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * os.extent * os.inner + offset * os.inner));
        }
        offsets->push_back(offset);
        offset += ps.extent;
        inputs.push_back(p.impl());
    }
    auto captured = inputs;
    return finish("concat", out_shape, std::move(out), detail::promote(parts), std::move(inputs),
                  [captured, offsets, os, axis](std::span<const double> g) {
                      for (std::size_t k = 0; k < captured.size(); ++k) {
                          double* gp = grad_of(captured[k]);
                          if (!gp) continue;
                          const AxisSplit ps = split_axis(captured[k]->shape, axis);
                          const std::size_t block = ps.extent * ps.inner;
                          for (std::size_t o = 0; o < ps.outer; ++o) {
                              const double* src = g.data() + o * os.extent * os.inner + (*offsets)[k] * os.inner;
                              double* dst = gp + o * block;
                              for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                          }
                      }
                  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length)
{
    const Shape& s = x.shape();
    if (axis >= s.size() || start + length > s[axis]) {
        detail::shape_error("slice", s,
                            "axis " + std::to_string(axis) + " range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ")");
    }
    Shape out_shape = s;
    out_shape[axis] = length;
    const AxisSplit xs = split_axis(s, axis);
    auto xv = x.data();
    std::vector<double> out(shape_numel(out_shape));
    const std::size_t block = length * xs.inner;
    for (std::size_t o = 0; o < xs.outer; ++o) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * xs.extent * xs.inner + start * xs.inner), block,
                    out.begin() + static_cast<std::ptrdiff_t>(o * block));
    }
    ImplPtr px = x.impl();
    return finish("slice", std::move(out_shape), std::move(out), x.dtype(), {px},
                  [px, xs, start, block](std::span<const double> g) {
                      double* gx = grad_of(px);
                      if (!gx) return;
                      for (std::size_t o = 0; o < xs.outer; ++o) {
                          double* dst = gx + o * xs.extent * xs.inner + start * xs.inner;
                          const double* src = g.data() + o * block;
                          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                  });
}

Tensor stack_scalars(const std::vector<Tensor>& scalars)
{
    std::vector<Tensor> parts;
    parts.reserve(scalars.size());
    for (const Tensor& s : scalars) {
        if (s.numel() != 1) detail::shape_error("stack_scalars", s.shape(), "expected a scalar");
        parts.push_back(s.shape() == Shape{1} ? s : reshape(s, {1}));
    }
    return concat(parts, 0);
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    detail::require_rank("matmul", a, 2);
    detail::require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) detail::shape_error("matmul", a.shape(), b.shape());
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    ImplPtr pa = a.impl(), pb = b.impl();
    return finish("matmul", {m, n}, std::move(out), detail::promote({&a, &b}), {pa, pb},
                  [pa, pb, m, k, n](std::span<const double> g) {
                      if (double* ga = grad_of(pa)) {
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->data[p * n + j];
                                  ga[i * k + p] += acc;
                              }
                      }
                      if (double* gb = grad_of(pb)) {
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  const double aip = pa->data[i * k + p];
                                  for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                              }
                      }
                  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

inline blasint blas_int(std::size_t n) { return static_cast<blasint>(n); }

struct ConvGeom {
    std::size_t batch, cin, h, w, cout, kh, kw, stride, groups, ho, wo, ph, pw;
    Padding padding;
    std::size_t cin_g() const { return cin / groups; }
    std::size_t cout_g() const { return cout / groups; }
};

// Visits every (weight tap, output row) pair as contiguous runs of output
// columns. f(w_index, out_offset, in_offset, count, in_step) covers
// out[out_offset + t] <-> in[in_offset + t * in_step] for t < count.
template <class F>
void conv_runs(const ConvGeom& g, F&& f)
{
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t oc = 0; oc < g.cout; ++oc) {
            const std::size_t grp = oc / g.cout_g();
            const std::size_t out_plane = (b * g.cout + oc) * g.ho * g.wo;
            for (std::size_t icl = 0; icl < g.cin_g(); ++icl) {
                const std::size_t ic = grp * g.cin_g() + icl;
                const std::size_t in_plane = (b * g.cin + ic) * g.h * g.w;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const std::size_t wi = ((oc * g.cin_g() + icl) * g.kh + ky) * g.kw + kx;
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pw);
                        // ox range with 0 <= ox*s + dx <= W-1
                        std::ptrdiff_t lo = dx >= 0 ? 0 : (-dx + s - 1) / s;
                        std::ptrdiff_t hi = (W - 1 - dx) >= 0 ? (W - 1 - dx) / s + 1 : 0;
                        lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(g.wo));
                        hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(g.wo));
                        for (std::size_t oy = 0; oy < g.ho; ++oy) {
                            std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) -
                                                static_cast<std::ptrdiff_t>(g.ph);
                            if (iy < 0 || iy >= H) {
                                if (g.padding == Padding::zero) continue;
                                iy = std::clamp<std::ptrdiff_t>(iy, 0, H - 1);
                            }
                            const std::size_t out_row = out_plane + oy * g.wo;
                            const std::size_t in_row = in_plane + static_cast<std::size_t>(iy) * g.w;
                            if (hi > lo) {
                                f(wi, out_row + static_cast<std::size_t>(lo),
                                  in_row + static_cast<std::size_t>(lo * s + dx), static_cast<std::size_t>(hi - lo),
                                  g.stride);
                            }
                            if (g.padding == Padding::replicate) {
                                for (std::ptrdiff_t ox = 0; ox < lo; ++ox) f(wi, out_row + ox, in_row, 1, 0);
                                for (std::ptrdiff_t ox = hi; ox < static_cast<std::ptrdiff_t>(g.wo); ++ox)
                                    f(wi, out_row + ox, in_row + g.w - 1, 1, 0);
                            }
                        }
                    }
                }
            }
        }
    }
}

// Rows are (ic, ky, kx) taps, columns are output pixels (oy, ox).
void im2col(const ConvGeom& g, const double* x, double* col)
{
    const std::size_t P = g.ho * g.wo;
    const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t ic = 0; ic < g.cin; ++ic) {
        const double* plane = x + ic * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                double* row = col + ((ic * g.kh + ky) * g.kw + kx) * P;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.ph);
                    const bool row_out = iy < 0 || iy >= H;
                    if (row_out && g.padding == Padding::zero) {
                        std::fill_n(row + oy * g.wo, g.wo, 0.0);
                        continue;
                    }
                    iy = std::clamp<std::ptrdiff_t>(iy, 0, H - 1);
                    const double* src = plane + static_cast<std::size_t>(iy) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pw);
                        if (ix < 0 || ix >= W) {
                            if (g.padding == Padding::zero) {
                                row[oy * g.wo + ox] = 0.0;
                                continue;
                            }
                            ix = std::clamp<std::ptrdiff_t>(ix, 0, W - 1);
                        }
                        row[oy * g.wo + ox] = src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back onto the input plane.
void col2im_add(const ConvGeom& g, const double* col, double* gx)
{
    const std::size_t P = g.ho * g.wo;
    const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t ic = 0; ic < g.cin; ++ic) {
        double* plane = gx + ic * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const double* row = col + ((ic * g.kh + ky) * g.kw + kx) * P;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.ph);
                    if ((iy < 0 || iy >= H) && g.padding == Padding::zero) continue;
                    iy = std::clamp<std::ptrdiff_t>(iy, 0, H - 1);
                    double* dst = plane + static_cast<std::size_t>(iy) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pw);
                        if (ix < 0 || ix >= W) {
                            if (g.padding == Padding::zero) continue;
                            ix = std::clamp<std::ptrdiff_t>(ix, 0, W - 1);
                        }
                        dst[ix] += row[oy * g.wo + ox];
                    }
                }
            }
        }
    }
}

bool is_identity_im2col(const ConvGeom& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1; }

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& options)
{
    detail::require_rank("conv2d", x, 4);
    detail::require_rank("conv2d", weight, 4);
    ConvGeom g{};
    g.batch = x.dim(0);
    g.cin = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.cout = weight.dim(0);
    g.kh = weight.dim(2);
    g.kw = weight.dim(3);
    g.stride = options.stride;
    g.groups = options.groups;
    g.padding = options.padding;
    if (g.groups == 0 || g.stride == 0) throw ConfigError("conv2d: stride and groups must be positive");
    if (g.cin % g.groups != 0 || g.cout % g.groups != 0 || weight.dim(1) != g.cin / g.groups) {
        detail::shape_error("conv2d", x.shape(), weight.shape(), "channel/group mismatch");
    }
    if (g.kh % 2 == 0 || g.kw % 2 == 0) detail::shape_error("conv2d", weight.shape(), "kernel extents must be odd");
    if (bias.defined() && bias.shape() != Shape{g.cout}) detail::shape_error("conv2d", weight.shape(), bias.shape(), "bias");
    if (g.h == 0 || g.w == 0) detail::shape_error("conv2d", x.shape(), "empty spatial extent");
    g.ph = g.kh / 2;
    g.pw = g.kw / 2;
    g.ho = (g.h - 1) / g.stride + 1;
    g.wo = (g.w - 1) / g.stride + 1;

    std::vector<double> out(g.batch * g.cout * g.ho * g.wo, 0.0);
    if (bias.defined()) {
        auto bv = bias.data();
        for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t oc = 0; oc < g.cout; ++oc)
                std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((b * g.cout + oc) * g.ho * g.wo), g.ho * g.wo,
                            bv[oc]);
    }
    // Dense convolutions run as one GEMM per batch item over im2col columns;
    // grouped ones walk contiguous runs directly.
    const bool dense = g.groups == 1;
    const std::size_t P = g.ho * g.wo, K = g.cin * g.kh * g.kw;
    if (dense) {
        const double* in = x.data().data();
        const double* wv = weight.data().data();
        std::vector<double> col(is_identity_im2col(g) ? 0 : K * P);
        for (std::size_t b = 0; b < g.batch; ++b) {
            const double* xb = in + b * g.cin * g.h * g.w;
            const double* cb = xb;
            if (!col.empty()) {
                im2col(g, xb, col.data());
                cb = col.data();
            }
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(g.cout), blas_int(P), blas_int(K), 1.0, wv,
                        blas_int(K), cb, blas_int(P), 1.0, out.data() + b * g.cout * P, blas_int(P));
        }
    } else {
        const double* in = x.data().data();
        const double* wv = weight.data().data();
        double* o = out.data();
        conv_runs(g, [&](std::size_t wi, std::size_t oo, std::size_t io, std::size_t count, std::size_t step) {
            const double wgt = wv[wi];
            const double* src = in + io;
            double* dst = o + oo;
            if (step == 1) {
                for (std::size_t t = 0; t < count; ++t) dst[t] += wgt * src[t];
            } else {
                for (std::size_t t = 0; t < count; ++t) dst[t] += wgt * src[t * step];
            }
        });
    }

    ImplPtr px = x.impl(), pw = weight.impl();
    ImplPtr pb = bias.defined() ? bias.impl() : nullptr;
    const std::string_view name = g.groups == g.cin && g.groups > 1 ? "depthwise_conv2d" : "conv2d";
    return finish(name, {g.batch, g.cout, g.ho, g.wo}, std::move(out), detail::promote({&x, &weight, &bias}),
                  {px, pw, pb}, [g, dense, P, K, px, pw, pb](std::span<const double> gout) {
                      double* gx = grad_of(px);
                      double* gw = grad_of(pw);
                      if (pb) {
                          if (double* gb = grad_of(pb)) {
                              for (std::size_t b = 0; b < g.batch; ++b)
                                  for (std::size_t oc = 0; oc < g.cout; ++oc) {
                                      const double* src = gout.data() + (b * g.cout + oc) * P;
                                      double acc = 0.0;
                                      for (std::size_t i = 0; i < P; ++i) acc += src[i];
                                      gb[oc] += acc;
                                  }
                          }
                      }
                      if (!gx && !gw) return;
                      const double* in = px->data.data();
                      const double* wv = pw->data.data();
                      const double* go = gout.data();
                      if (dense) {
                          const bool identity = is_identity_im2col(g);
                          std::vector<double> col(identity ? 0 : K * P), gcol(identity ? 0 : K * P);
                          for (std::size_t b = 0; b < g.batch; ++b) {
                              const double* gob = go + b * g.cout * P;
                              const double* xb = in + b * g.cin * g.h * g.w;
                              if (gw) {
                                  const double* cb = xb;
                                  if (!identity) {
                                      im2col(g, xb, col.data());
                                      cb = col.data();
                                  }
                                  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(g.cout), blas_int(K),
                                              blas_int(P), 1.0, gob, blas_int(P), cb, blas_int(P), 1.0, gw, blas_int(K));
                              }
                              if (gx) {
                                  double* gxb = gx + b * g.cin * g.h * g.w;
                                  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(K), blas_int(P),
                                              blas_int(g.cout), 1.0, wv, blas_int(K), gob, blas_int(P),
                                              identity ? 1.0 : 0.0, identity ? gxb : gcol.data(), blas_int(P));
                                  if (!identity) col2im_add(g, gcol.data(), gxb);
                              }
                          }
                          return;
                      }
                      conv_runs(g, [&](std::size_t wi, std::size_t oo, std::size_t io, std::size_t count,
                                       std::size_t step) {
                          const double* gsrc = go + oo;
                          if (gx) {
                              const double wgt = wv[wi];
                              double* dst = gx + io;
                              for (std::size_t t = 0; t < count; ++t) dst[t * step] += wgt * gsrc[t];
                          }
                          if (gw) {
                              const double* src = in + io;
                              double acc = 0.0;
                              for (std::size_t t = 0; t < count; ++t) acc += gsrc[t] * src[t * step];
                              gw[wi] += acc;
                          }
                      });
                  });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding)
{
    detail::require_rank("depthwise_conv2d", x, 4);
    if (weight.rank() != 4 || weight.dim(0) != x.dim(1) || weight.dim(1) != 1) {
        detail::shape_error("depthwise_conv2d", x.shape(), weight.shape());
    }
    return conv2d(x, weight, bias, Conv2dOptions{1, x.dim(1), padding});
}

// ---------------------------------------------------------------------------
// Resampling and pooling

Tensor upsample_nearest2x(const Tensor& x)
{
    detail::require_rank("upsample_nearest2x", x, 4);
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = 2 * h, wo = 2 * w;
    auto xv = x.data();
    std::vector<double> out(planes * ho * wo);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t c = 0; c < wo; ++c) out[(p * ho + y) * wo + c] = xv[(p * h + y / 2) * w + c / 2];
    ImplPtr px = x.impl();
    return finish("upsample_nearest2x", {x.dim(0), x.dim(1), ho, wo}, std::move(out), x.dtype(), {px},
                  [px, planes, h, w](std::span<const double> g) {
                      double* gx = grad_of(px);
                      if (!gx) return;
                      const std::size_t ho = 2 * h, wo = 2 * w;
                      for (std::size_t p = 0; p < planes; ++p)
                          for (std::size_t y = 0; y < ho; ++y)
                              for (std::size_t c = 0; c < wo; ++c)
                                  gx[(p * h + y / 2) * w + c / 2] += g[(p * ho + y) * wo + c];
                  });
}

namespace {

template <class Better>
Tensor extremum_pool3x3(std::string_view op, const Tensor& x, Better better)
{
    detail::require_rank(op, x, 4);
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    auto xv = x.data();
    std::vector<double> out(xv.size());
    auto arg = std::make_shared<std::vector<std::size_t>>(xv.size());
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t c = 0; c < w; ++c) {
                std::size_t best = (p * h + y) * w + c;
                for (int dy = -1; dy <= 1; ++dy) {
                    const std::size_t yy = static_cast<std::size_t>(
                        std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0, static_cast<std::ptrdiff_t>(h) - 1));
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::size_t xx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                            static_cast<std::ptrdiff_t>(c) + dx, 0, static_cast<std::ptrdiff_t>(w) - 1));
                        const std::size_t idx = (p * h + yy) * w + xx;
                        if (better(xv[idx], xv[best])) best = idx;
                    }
                }
                out[(p * h + y) * w + c] = xv[best];
                (*arg)[(p * h + y) * w + c] = best;
            }
        }
    }
    ImplPtr px = x.impl();
    return finish(op, x.shape(), std::move(out), x.dtype(), {px}, [px, arg](std::span<const double> g) {
        if (double* gx = grad_of(px)) {
            for (std::size_t i = 0; i < g.size(); ++i) gx[(*arg)[i]] += g[i];
        }
    });
}

} // namespace

Tensor max_pool3x3(const Tensor& x)
{
    return extremum_pool3x3("max_pool3x3", x, [](double a, double b) { return a > b; });
}

Tensor min_pool3x3(const Tensor& x)
{
    return extremum_pool3x3("min_pool3x3", x, [](double a, double b) { return a < b; });
}

Tensor avg_pool(const Tensor& x, std::size_t factor)
{
    detail::require_rank("avg_pool", x, 4);
    if (factor == 0) throw ConfigError("avg_pool: factor must be positive");
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h / factor, wo = w / factor;
    if (ho == 0 || wo == 0) detail::shape_error("avg_pool", x.shape(), "smaller than pooling factor");
    if (factor == 1) return reshape(x, x.shape());
    const double inv = 1.0 / static_cast<double>(factor * factor);
    auto xv = x.data();
    std::vector<double> out(planes * ho * wo, 0.0);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < ho * factor; ++y)
            for (std::size_t c = 0; c < wo * factor; ++c)
                out[(p * ho + y / factor) * wo + c / factor] += inv * xv[(p * h + y) * w + c];
    ImplPtr px = x.impl();
    return finish("avg_pool", {x.dim(0), x.dim(1), ho, wo}, std::move(out), x.dtype(), {px},
                  [px, planes, h, w, ho, wo, factor, inv](std::span<const double> g) {
                      double* gx = grad_of(px);
                      if (!gx) return;
                      for (std::size_t p = 0; p < planes; ++p)
                          for (std::size_t y = 0; y < ho * factor; ++y)
                              for (std::size_t c = 0; c < wo * factor; ++c)
                                  gx[(p * h + y) * w + c] += inv * g[(p * ho + y / factor) * wo + c / factor];
                  });
}

Tensor global_avg_pool(const Tensor& x)
{
    detail::require_rank("global_avg_pool", x, 4);
    const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    auto xv = x.data();
    std::vector<double> out(planes, 0.0);
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
        out[p] = acc / static_cast<double>(hw);
    }
    ImplPtr px = x.impl();
    return finish("global_avg_pool", {x.dim(0), x.dim(1), 1, 1}, std::move(out), x.dtype(), {px},
                  [px, planes, hw](std::span<const double> g) {
                      double* gx = grad_of(px);
                      if (!gx) return;
                      for (std::size_t p = 0; p < planes; ++p)
                          for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g[p] / static_cast<double>(hw);
                  });
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

void check_affine(std::string_view op, const Tensor& x, const Tensor& gamma, const Tensor& beta)
{
    detail::require_rank(op, x, 4);
    const Shape c{x.dim(1)};
    if (gamma.shape() != c) detail::shape_error(op, x.shape(), gamma.shape(), "gamma");
    if (beta.shape() != c) detail::shape_error(op, x.shape(), beta.shape(), "beta");
}

} // namespace

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
    check_affine("layer_norm_channels", x, gamma, beta);
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    auto xv = x.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(B * HW);
    std::vector<double> out(xv.size());
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < HW; ++i) {
            double m = 0.0;
            for (std::size_t c = 0; c < C; ++c) m += xv[(b * C + c) * HW + i];
            m /= static_cast<double>(C);
            double v = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double d = xv[(b * C + c) * HW + i] - m;
                v += d * d;
            }
            v /= static_cast<double>(C);
            const double is = 1.0 / std::sqrt(v + eps);
            (*inv_std)[b * HW + i] = is;
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t k = (b * C + c) * HW + i;
                (*xhat)[k] = (xv[k] - m) * is;
                out[k] = gv[c] * (*xhat)[k] + bv[c];
            }
        }
    }
    ImplPtr px = x.impl(), pg = gamma.impl(), pb = beta.impl();
    return finish("layer_norm_channels", x.shape(), std::move(out), detail::promote({&x, &gamma, &beta}), {px, pg, pb},
                  [px, pg, pb, xhat, inv_std, B, C, HW](std::span<const double> g) {
                      double* gx = grad_of(px);
                      double* gg = grad_of(pg);
                      double* gb = grad_of(pb);
                      const auto& gam = pg->data;
                      for (std::size_t b = 0; b < B; ++b) {
                          for (std::size_t i = 0; i < HW; ++i) {
                              double mg = 0.0, mgx = 0.0;
                              for (std::size_t c = 0; c < C; ++c) {
                                  const std::size_t k = (b * C + c) * HW + i;
                                  const double gh = g[k] * gam[c];
                                  mg += gh;
                                  mgx += gh * (*xhat)[k];
                                  if (gg) gg[c] += g[k] * (*xhat)[k];
                                  if (gb) gb[c] += g[k];
                              }
                              if (!gx) continue;
                              mg /= static_cast<double>(C);
                              mgx /= static_cast<double>(C);
                              const double is = (*inv_std)[b * HW + i];
                              for (std::size_t c = 0; c < C; ++c) {
                                  const std::size_t k = (b * C + c) * HW + i;
                                  gx[k] += is * (g[k] * gam[c] - mg - (*xhat)[k] * mgx);
                              }
                          }
                      }
                  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training)
{
    check_affine("batch_norm", x, gamma, beta);
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (state.running_mean.shape() != Shape{C} || state.running_var.shape() != Shape{C}) {
        detail::shape_error("batch_norm", x.shape(), state.running_mean.shape(), "running statistics");
    }
    if (training && B < 2) return layer_norm_channels(x, gamma, beta, state.eps);

    auto xv = x.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    const double n = static_cast<double>(B * HW);
    std::vector<double> mu(C), inv_std(C);
    if (training) {
        auto rm = state.running_mean.mutable_data();
        auto rv = state.running_var.mutable_data();
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < HW; ++i) m += xv[(b * C + c) * HW + i];
            m /= n;
            double v = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < HW; ++i) {
                    const double d = xv[(b * C + c) * HW + i] - m;
                    v += d * d;
                }
            v /= n;
            mu[c] = m;
            inv_std[c] = 1.0 / std::sqrt(v + state.eps);
            const double unbiased = n > 1 ? v * n / (n - 1) : v;
            rm[c] = state.momentum * rm[c] + (1.0 - state.momentum) * m;
            rv[c] = state.momentum * rv[c] + (1.0 - state.momentum) * unbiased;
        }
        state.running_mean.normalize_storage();
        state.running_var.normalize_storage();
    } else {
        auto rm = state.running_mean.data();
        auto rv = state.running_var.data();
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = rm[c];
            inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
        }
    }
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    std::vector<double> out(xv.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t k = (b * C + c) * HW + i;
                (*xhat)[k] = (xv[k] - mu[c]) * inv_std[c];
                out[k] = gv[c] * (*xhat)[k] + bv[c];
            }
    ImplPtr px = x.impl(), pg = gamma.impl(), pb = beta.impl();
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    return finish("batch_norm", x.shape(), std::move(out), detail::promote({&x, &gamma, &beta}), {px, pg, pb},
                  [px, pg, pb, xhat, istd, B, C, HW, n, training](std::span<const double> g) {
                      double* gx = grad_of(px);
                      double* gg = grad_of(pg);
                      double* gb = grad_of(pb);
                      const auto& gam = pg->data;
                      for (std::size_t c = 0; c < C; ++c) {
                          double sg = 0.0, sgx = 0.0;
                          for (std::size_t b = 0; b < B; ++b)
                              for (std::size_t i = 0; i < HW; ++i) {
                                  const std::size_t k = (b * C + c) * HW + i;
                                  sg += g[k];
                                  sgx += g[k] * (*xhat)[k];
                              }
                          if (gg) gg[c] += sgx;
                          if (gb) gb[c] += sg;
                          if (!gx) continue;
                          const double scale = gam[c] * (*istd)[c];
                          const double mg = sg / n, mgx = sgx / n;
                          for (std::size_t b = 0; b < B; ++b)
                              for (std::size_t i = 0; i < HW; ++i) {
                                  const std::size_t k = (b * C + c) * HW + i;
                                  gx[k] += training ? scale * (g[k] - mg - (*xhat)[k] * mgx) : scale * g[k];
                              }
                      }
                  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng)
{
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return x;
    auto xv = x.data();
    auto mask = std::make_shared<std::vector<double>>(xv.size());
    const double keep = 1.0 / (1.0 - p);
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep;
        out[i] = xv[i] * (*mask)[i];
    }
    ImplPtr px = x.impl();
    return finish("dropout", x.shape(), std::move(out), x.dtype(), {px}, [px, mask](std::span<const double> g) {
        if (double* gx = grad_of(px)) {
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
        }
    });
}

} // namespace s2m
