#include "mixerflow/substrate/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <unordered_set>
#include <utility>

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mixerflow/substrate/errors.hpp"
#include "vector_math.hpp"

namespace mixerflow {

using detail::Node;
using detail::TensorImpl;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

thread_local bool t_grad_enabled = true;

#if defined(__GLIBC__)
// Activations of a few MB are allocated and released for every operation. Keeping them on
// the heap instead of fresh mmap regions avoids re-faulting their pages on every step.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

using BackwardFn = std::function<void(const TensorImpl&)>;
using ImplPtr = std::shared_ptr<TensorImpl>;

bool all_finite(const std::vector<double>& v) {
  constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double x : v) {
    bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(x) & kExponent) == kExponent);
  }
  return bad == 0;
}

const ImplPtr& need(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
  return t.impl();
}

// Builds the output of an operation, validates it, and records it when any input needs gradient.
Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::initializer_list<const Tensor*> inputs,
                   BackwardFn backward) {
  if (!all_finite(data)) throw NumericError(std::string(op) + ": produced a non-finite value");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (t_grad_enabled) {
    bool any = false;
    for (const Tensor* in : inputs) any = any || (in->defined() && in->requires_grad());
    if (any && backward) {
      impl->requires_grad = true;
      impl->node = std::make_shared<Node>();
      impl->node->op = op;
      for (const Tensor* in : inputs) {
        if (in->defined()) impl->node->inputs.push_back(in->impl());
      }
      impl->node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Broadcasting: `small` is either a single element or a trailing suffix of `big`.

struct Broadcast {
  Shape shape;
  std::size_t outer = 1;
  std::size_t inner = 1;
  bool a_small = false;
  bool b_small = false;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast resolve(const Shape& a, const Shape& b, const char* op) {
  Broadcast r;
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (a == b) {
    r.shape = a;
    r.inner = na;
  } else if (nb == 1 || is_suffix(b, a)) {
    r.shape = a;
    r.b_small = true;
    r.inner = nb;
    r.outer = na / std::max<std::size_t>(nb, 1);
  } else if (na == 1 || is_suffix(a, b)) {
    r.shape = b;
    r.a_small = true;
    r.inner = na;
    r.outer = nb / std::max<std::size_t>(na, 1);
  } else {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                         shape_to_string(b));
  }
  return r;
}

// Sums a full-size gradient down to the broadcast operand.
std::vector<double> reduce_to_small(const double* g, const Broadcast& br) {
  std::vector<double> out(br.inner, 0.0);
  for (std::size_t o = 0; o < br.outer; ++o) {
    const double* row = g + o * br.inner;
    for (std::size_t i = 0; i < br.inner; ++i) out[i] += row[i];
  }
  return out;
}

template <typename Forward>
std::vector<double> binary_forward(const TensorImpl& a, const TensorImpl& b, const Broadcast& br, Forward f) {
  std::vector<double> out(br.outer * br.inner);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  for (std::size_t o = 0; o < br.outer; ++o) {
    const double* ra = br.a_small ? pa : pa + o * br.inner;
    const double* rb = br.b_small ? pb : pb + o * br.inner;
    double* ro = out.data() + o * br.inner;
    for (std::size_t i = 0; i < br.inner; ++i) ro[i] = f(ra[i], rb[i]);
  }
  return out;
}

// Accumulates dOut * partial into an operand, reducing over broadcast axes when needed.
template <typename Partial>
void binary_backward(const TensorImpl& out, const TensorImpl& a, const TensorImpl& b, const Broadcast& br,
                     bool small, TensorImpl& target, Partial partial) {
  std::vector<double> full(br.outer * br.inner);
  const double* g = out.grad.data();
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  for (std::size_t o = 0; o < br.outer; ++o) {
    const double* ra = br.a_small ? pa : pa + o * br.inner;
    const double* rb = br.b_small ? pb : pb + o * br.inner;
    const double* rg = g + o * br.inner;
    double* rf = full.data() + o * br.inner;
    for (std::size_t i = 0; i < br.inner; ++i) rf[i] = partial(rg[i], ra[i], rb[i]);
  }
  if (small) {
    target.accumulate(reduce_to_small(full.data(), br));
  } else {
    target.accumulate(std::move(full));
  }
}

template <typename Forward, typename PartialA, typename PartialB>
Tensor binary_op(const Tensor& ta, const Tensor& tb, const char* op, Forward f, PartialA da, PartialB db) {
  const ImplPtr& a = need(ta, op);
  const ImplPtr& b = need(tb, op);
  Broadcast br = resolve(a->shape, b->shape, op);
  auto data = binary_forward(*a, *b, br, f);
  return make_result(br.shape, std::move(data), op, {&ta, &tb}, [a, b, br, da, db](const TensorImpl& out) {
    if (a->requires_grad) binary_backward(out, *a, *b, br, br.a_small, *a, da);
    if (b->requires_grad) binary_backward(out, *a, *b, br, br.b_small, *b, db);
  });
}

// Unary op whose derivative is expressed through the input x and the output y.
template <typename Forward, typename Derivative>
Tensor unary_op(const Tensor& tx, const char* op, Forward f, Derivative d) {
  const ImplPtr& x = need(tx, op);
  std::vector<double> out(x->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x->data[i]);
  return make_result(x->shape, std::move(out), op, {&tx}, [x, d](const TensorImpl& o) {
    std::vector<double> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * d(x->data[i], o.data[i]);
    x->accumulate(std::move(g));
  });
}

constexpr double kGeluTanhC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluTanhA = 0.044715;

std::vector<std::size_t> validate_axes(const Shape& shape, std::vector<std::size_t> axes, const char* op) {
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw DimensionError(std::string(op) + ": repeated axis");
  }
  for (auto a : axes) {
    if (a >= shape.size()) {
      throw DimensionError(std::string(op) + ": axis " + std::to_string(a) + " out of range for shape " +
                           shape_to_string(shape));
    }
  }
  return axes;
}

// Maps each input element to its slot in the reduced output.
struct Reduction {
  Shape out_shape;
  std::vector<std::size_t> out_index;
  std::size_t out_numel = 1;
  std::size_t count = 1;  // inputs per output slot
};

Reduction plan_reduction(const Shape& shape, const std::vector<std::size_t>& axes) {
  Reduction r;
  std::vector<bool> reduced(shape.size(), false);
  for (auto a : axes) reduced[a] = true;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (!reduced[i]) r.out_shape.push_back(shape[i]);
    else r.count *= shape[i];
  }
  r.out_numel = shape_numel(r.out_shape);
  const std::size_t n = shape_numel(shape);
  r.out_index.resize(n);
  // Output strides expressed per input axis (zero for reduced axes).
  std::vector<std::size_t> ostride(shape.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    if (!reduced[i]) {
      ostride[i] = s;
      s *= shape[i];
    }
  }
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < shape.size(); ++i) o += idx[i] * ostride[i];
    r.out_index[flat] = o;
    for (std::size_t i = shape.size(); i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void detail::TensorImpl::accumulate(std::span<const double> g) {
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

void detail::TensorImpl::accumulate(std::vector<double>&& g) {
  if (grad.empty()) {
    grad = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

void detail::TensorImpl::accumulate_at(std::size_t i, double g) {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  grad[i] += g;
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
  }
  if (!all_finite(values)) throw NumericError("tensor constructed from non-finite values");
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return need(*this, "numel")->data.size(); }

std::span<const double> Tensor::values() const { return need(*this, "values")->data; }

std::span<double> Tensor::mutable_values() {
  const auto& impl = need(*this, "mutable_values");
  if (impl->node) throw ContractError("cannot mutate the output of a recorded operation");
  return impl->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

std::vector<double> Tensor::grad() const {
  const auto& impl = need(*this, "grad");
  if (impl->grad.empty()) return std::vector<double>(impl->data.size(), 0.0);
  return impl->grad;
}

std::span<double> Tensor::mutable_grad() {
  const auto& impl = need(*this, "mutable_grad");
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad;
}

void Tensor::zero_grad() {
  const auto& impl = need(*this, "zero_grad");
  impl->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& impl = need(*this, "detach");
  auto copy = std::make_shared<TensorImpl>();
  copy->shape = impl->shape;
  copy->data = impl->data;
  return Tensor(std::move(copy));
}

Tensor Parameter::gradient() const { return Tensor(value.shape(), value.grad()); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  const ImplPtr& root = need(loss, "backward");
  if (root->data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(root->shape));
  }
  if (root->released) throw ContractError("backward() called twice on one recorded graph; record the forward pass again");
  if (!root->requires_grad || !root->node) {
    root->released = true;
    return;
  }

  // Iterative post-order DFS; `order` keeps every node alive until the graph is released.
  std::vector<ImplPtr> order;
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<ImplPtr, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      const ImplPtr& child = impl->node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  root->grad.assign(1, 1.0);
  // Interior gradients and closures are dropped as soon as they have been propagated.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& impl = **it;
    if (!impl.node) continue;
    if (!impl.grad.empty()) impl.node->backward(impl);
    impl.node.reset();
    std::vector<double>().swap(impl.grad);
    impl.requires_grad = false;
    impl.released = true;
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const ImplPtr& a = need(ta, "matmul");
  const ImplPtr& b = need(tb, "matmul");
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a->shape) + " by " + shape_to_string(b->shape));
  }
  const auto m = static_cast<Eigen::Index>(a->shape[0]);
  const auto k = static_cast<Eigen::Index>(a->shape[1]);
  const auto n = static_cast<Eigen::Index>(b->shape[1]);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MatrixMap(out.data(), m, n).noalias() = ConstMatrixMap(a->data.data(), m, k) * ConstMatrixMap(b->data.data(), k, n);
  return make_result({a->shape[0], b->shape[1]}, std::move(out), "matmul", {&ta, &tb}, [a, b, m, k, n](const TensorImpl& o) {
    ConstMatrixMap g(o.grad.data(), m, n);
    if (a->requires_grad) {
      std::vector<double> ga(static_cast<std::size_t>(m * k));
      MatrixMap(ga.data(), m, k).noalias() = g * ConstMatrixMap(b->data.data(), k, n).transpose();
      a->accumulate(std::move(ga));
    }
    if (b->requires_grad) {
      std::vector<double> gb(static_cast<std::size_t>(k * n));
      MatrixMap(gb.data(), k, n).noalias() = ConstMatrixMap(a->data.data(), m, k).transpose() * g;
      b->accumulate(std::move(gb));
    }
  });
}

Tensor linear(const Tensor& tx, const Tensor& tw, const Tensor& tbias) {
  const ImplPtr& x = need(tx, "linear");
  const ImplPtr& w = need(tw, "linear");
  if (x->shape.size() != 2 || w->shape.size() != 2 || x->shape[1] != w->shape[1]) {
    throw DimensionError("linear: input " + shape_to_string(x->shape) + " does not match weight " +
                         shape_to_string(w->shape));
  }
  ImplPtr bias = tbias.defined() ? tbias.impl() : nullptr;
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != w->shape[0])) {
    throw DimensionError("linear: bias " + shape_to_string(bias->shape) + " does not match weight " +
                         shape_to_string(w->shape));
  }
  const auto n = static_cast<Eigen::Index>(x->shape[0]);
  const auto in = static_cast<Eigen::Index>(x->shape[1]);
  const auto outw = static_cast<Eigen::Index>(w->shape[0]);
  // The GEMM kernel handles leftover rows with narrower code paths that round differently, so
  // a row's result would depend on its position. Padding to whole packets keeps every row on
  // the same path, which makes row-wise layers exactly equivariant to row permutations.
  constexpr Eigen::Index kRowPacket = 8;
  const Eigen::Index padded = (n + kRowPacket - 1) / kRowPacket * kRowPacket;
  std::vector<double> out(static_cast<std::size_t>(n * outw));
  const ConstMatrixMap wmap(w->data.data(), outw, in);
  if (padded == n) {
    MatrixMap(out.data(), n, outw).noalias() = ConstMatrixMap(x->data.data(), n, in) * wmap.transpose();
  } else {
    RowMatrix xp = RowMatrix::Zero(padded, in);
    xp.topRows(n) = ConstMatrixMap(x->data.data(), n, in);
    const RowMatrix yp = xp * wmap.transpose();
    MatrixMap(out.data(), n, outw) = yp.topRows(n);
  }
  MatrixMap y(out.data(), n, outw);
  if (bias) y.rowwise() += ConstVectorMap(bias->data.data(), outw).transpose();
  return make_result({x->shape[0], w->shape[0]}, std::move(out), "linear", {&tx, &tw, &tbias},
                     [x, w, bias, n, in, outw](const TensorImpl& o) {
                       ConstMatrixMap g(o.grad.data(), n, outw);
                       if (x->requires_grad) {
                         std::vector<double> gx(static_cast<std::size_t>(n * in));
                         MatrixMap(gx.data(), n, in).noalias() = g * ConstMatrixMap(w->data.data(), outw, in);
                         x->accumulate(std::move(gx));
                       }
                       if (w->requires_grad) {
                         std::vector<double> gw(static_cast<std::size_t>(outw * in));
                         MatrixMap(gw.data(), outw, in).noalias() = g.transpose() * ConstMatrixMap(x->data.data(), n, in);
                         w->accumulate(std::move(gw));
                       }
                       if (bias && bias->requires_grad) {
                         std::vector<double> gb(static_cast<std::size_t>(outw), 0.0);
                         const double* gd = o.grad.data();
                         for (Eigen::Index r = 0; r < n; ++r)
                           for (Eigen::Index j = 0; j < outw; ++j) gb[j] += gd[r * outw + j];
                         bias->accumulate(std::move(gb));
                       }
                     });
}

Tensor transpose(const Tensor& ta) {
  const ImplPtr& a = need(ta, "transpose");
  if (a->shape.size() != 2) throw DimensionError("transpose expects a matrix, got " + shape_to_string(a->shape));
  const std::size_t r = a->shape[0], c = a->shape[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a->data[i * c + j];
  return make_result({c, r}, std::move(out), "transpose", {&ta}, [a, r, c](const TensorImpl& o) {
    std::vector<double> g(r * c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] = o.grad[j * r + i];
    a->accumulate(std::move(g));
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : need(b, "div")->data) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; }, [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor exp(const Tensor& tx) {
  const ImplPtr& x = need(tx, "exp");
  std::vector<double> out(x->data.size());
  vmath::exp(x->data.data(), out.data(), out.size());
  return make_result(x->shape, std::move(out), "exp", {&tx}, [x](const TensorImpl& o) {
    std::vector<double> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * o.data[i];
    x->accumulate(std::move(g));
  });
}

Tensor log(const Tensor& x) {
  for (double v : need(x, "log")->data) {
    if (!(v > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(v));
  }
  return unary_op(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& tx) {
  const ImplPtr& x = need(tx, "tanh");
  std::vector<double> out(x->data.size());
  vmath::tanh(x->data.data(), out.data(), out.size());
  return make_result(x->shape, std::move(out), "tanh", {&tx}, [x](const TensorImpl& o) {
    std::vector<double> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * (1.0 - o.data[i] * o.data[i]);
    x->accumulate(std::move(g));
  });
}

Tensor gelu(const Tensor& x, GeluKind kind) {
  const ImplPtr& xi = need(x, "gelu");
  const std::size_t n = xi->data.size();
  std::vector<double> out(n);
  if (kind == GeluKind::exact) {
    auto cdf = std::make_shared<std::vector<double>>(n);
    vmath::gelu(xi->data.data(), out.data(), cdf->data(), n);
    return make_result(xi->shape, std::move(out), "gelu", {&x}, [xi, cdf](const TensorImpl& o) {
      std::vector<double> g(o.grad.size());
      vmath::gelu_backward(xi->data.data(), cdf->data(), o.grad.data(), g.data(), g.size());
      xi->accumulate(std::move(g));
    });
  }
  // 0.5·x·(1 + tanh(u)), u = c·(x + a·x³)
  auto t = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = xi->data[i];
    out[i] = kGeluTanhC * (v + kGeluTanhA * v * v * v);
  }
  vmath::tanh(out.data(), t->data(), n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * xi->data[i] * (1.0 + (*t)[i]);
  return make_result(xi->shape, std::move(out), "gelu_tanh", {&x}, [xi, t](const TensorImpl& o) {
    std::vector<double> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xi->data[i];
      const double th = (*t)[i];
      g[i] = o.grad[i] *
             (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluTanhC * (1.0 + 3.0 * kGeluTanhA * v * v));
    }
    xi->accumulate(std::move(g));
  });
}

Tensor negate(const Tensor& x) {
  return unary_op(x, "negate", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op(x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary_op(x, "add_scalar", [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary_op(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& x) {
  return unary_op(
      x, "log_sigmoid", [](double v) { return -(std::max(-v, 0.0) + std::log1p(std::exp(-std::abs(v)))); },
      [](double v, double) { return stable_sigmoid(-v); });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& tx) {
  const ImplPtr& x = need(tx, "sum");
  double s = 0.0;
  for (double v : x->data) s += v;
  return make_result({}, {s}, "sum", {&tx}, [x](const TensorImpl& o) {
    x->accumulate(std::vector<double>(x->data.size(), o.grad[0]));
  });
}

Tensor sum(const Tensor& tx, std::vector<std::size_t> axes) {
  const ImplPtr& x = need(tx, "sum");
  axes = validate_axes(x->shape, std::move(axes), "sum");
  if (!axes.empty() && axes.back() - axes.front() + 1 == axes.size()) {
    // One contiguous block of axes: view the input as [pre, reduced, post].
    std::size_t pre = 1, red = 1, post = 1;
    Shape out_shape;
    for (std::size_t i = 0; i < x->shape.size(); ++i) {
      if (i < axes.front()) pre *= x->shape[i];
      else if (i > axes.back()) post *= x->shape[i];
      else red *= x->shape[i];
      if (i < axes.front() || i > axes.back()) out_shape.push_back(x->shape[i]);
    }
    std::vector<double> out(pre * post, 0.0);
    const double* src = x->data.data();
    for (std::size_t p = 0; p < pre; ++p)
      for (std::size_t r = 0; r < red; ++r) {
        const double* row = src + (p * red + r) * post;
        double* dst = out.data() + p * post;
        for (std::size_t q = 0; q < post; ++q) dst[q] += row[q];
      }
    return make_result(std::move(out_shape), std::move(out), "sum", {&tx}, [x, pre, red, post](const TensorImpl& o) {
      std::vector<double> g(pre * red * post);
      for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t r = 0; r < red; ++r)
          std::copy_n(o.grad.data() + p * post, post, g.data() + (p * red + r) * post);
      x->accumulate(std::move(g));
    });
  }
  auto plan = std::make_shared<Reduction>(plan_reduction(x->shape, axes));
  std::vector<double> out(plan->out_numel, 0.0);
  for (std::size_t i = 0; i < x->data.size(); ++i) out[plan->out_index[i]] += x->data[i];
  return make_result(plan->out_shape, std::move(out), "sum", {&tx}, [x, plan](const TensorImpl& o) {
    std::vector<double> g(x->data.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[plan->out_index[i]];
    x->accumulate(std::move(g));
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean(const Tensor& x, std::vector<std::size_t> axes) {
  std::size_t count = 1;
  for (auto a : validate_axes(x.shape(), axes, "mean")) count *= x.shape()[a];
  return scale(sum(x, std::move(axes)), 1.0 / static_cast<double>(count));
}

Tensor max(const Tensor& tx) {
  const ImplPtr& x = need(tx, "max");
  auto it = std::max_element(x->data.begin(), x->data.end());
  const auto arg = static_cast<std::size_t>(it - x->data.begin());
  return make_result({}, {*it}, "max", {&tx}, [x, arg](const TensorImpl& o) { x->accumulate_at(arg, o.grad[0]); });
}

Tensor max(const Tensor& tx, std::vector<std::size_t> axes) {
  const ImplPtr& x = need(tx, "max");
  axes = validate_axes(x->shape, std::move(axes), "max");
  Reduction plan = plan_reduction(x->shape, axes);
  std::vector<double> out(plan.out_numel, -std::numeric_limits<double>::infinity());
  auto arg = std::make_shared<std::vector<std::size_t>>(plan.out_numel, 0);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    const std::size_t o = plan.out_index[i];
    if (x->data[i] > out[o]) {
      out[o] = x->data[i];
      (*arg)[o] = i;
    }
  }
  return make_result(plan.out_shape, std::move(out), "max", {&tx}, [x, arg](const TensorImpl& o) {
    for (std::size_t k = 0; k < arg->size(); ++k) x->accumulate_at((*arg)[k], o.grad[k]);
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& tx, Shape shape) {
  const ImplPtr& x = need(tx, "reshape");
  if (shape_numel(shape) != x->data.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x->shape) + " as " + shape_to_string(shape));
  }
  return make_result(std::move(shape), x->data, "reshape", {&tx}, [x](const TensorImpl& o) { x->accumulate(o.grad); });
}

Tensor broadcast_to(const Tensor& tx, Shape shape) {
  const ImplPtr& x = need(tx, "broadcast_to");
  if (!(x->data.size() == 1 || is_suffix(x->shape, shape))) {
    throw DimensionError("broadcast_to: cannot broadcast " + shape_to_string(x->shape) + " to " + shape_to_string(shape));
  }
  const std::size_t inner = x->data.size();
  const std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x->data[i % inner];
  return make_result(std::move(shape), std::move(out), "broadcast_to", {&tx}, [x, inner, n](const TensorImpl& o) {
    std::vector<double> g(inner, 0.0);
    for (std::size_t i = 0; i < n; ++i) g[i % inner] += o.grad[i];
    x->accumulate(std::move(g));
  });
}

Tensor gather(const Tensor& tx, std::span<const std::size_t> index, const Shape& sample_shape) {
  const ImplPtr& x = need(tx, "gather");
  if (x->shape.empty()) throw DimensionError("gather: needs a leading batch axis");
  const std::size_t batch = x->shape[0];
  const std::size_t in_per = x->data.size() / batch;
  const std::size_t out_per = index.size();
  if (shape_numel(sample_shape) != out_per) {
    throw DimensionError("gather: index of length " + std::to_string(out_per) + " does not fill " +
                         shape_to_string(sample_shape));
  }
  for (auto j : index) {
    if (j >= in_per) throw DimensionError("gather: index " + std::to_string(j) + " out of range " + std::to_string(in_per));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  std::vector<double> out(batch * out_per);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = x->data.data() + b * in_per;
    double* dst = out.data() + b * out_per;
    for (std::size_t j = 0; j < out_per; ++j) dst[j] = src[(*idx)[j]];
  }
  Shape shape{batch};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return make_result(std::move(shape), std::move(out), "gather", {&tx}, [x, idx, batch, in_per, out_per](const TensorImpl& o) {
    std::vector<double> g(batch * in_per, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      double* dst = g.data() + b * in_per;
      const double* src = o.grad.data() + b * out_per;
      for (std::size_t j = 0; j < out_per; ++j) dst[(*idx)[j]] += src[j];
    }
    x->accumulate(std::move(g));
  });
}

Tensor scatter(const Tensor& tbase, const Tensor& tvalues, std::span<const std::size_t> index) {
  const ImplPtr& base = need(tbase, "scatter");
  const ImplPtr& values = need(tvalues, "scatter");
  if (base->shape.empty() || values->shape.empty() || base->shape[0] != values->shape[0]) {
    throw DimensionError("scatter: batch extents differ between " + shape_to_string(base->shape) + " and " +
                         shape_to_string(values->shape));
  }
  const std::size_t batch = base->shape[0];
  const std::size_t base_per = base->data.size() / batch;
  const std::size_t val_per = values->data.size() / batch;
  if (val_per != index.size()) throw DimensionError("scatter: index length does not match values per sample");
  std::vector<char> seen(base_per, 0);
  for (auto j : index) {
    if (j >= base_per) throw DimensionError("scatter: index out of range");
    if (seen[j]) throw ContractError("scatter: repeated target index");
    seen[j] = 1;
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  std::vector<double> out = base->data;
  for (std::size_t b = 0; b < batch; ++b) {
    double* dst = out.data() + b * base_per;
    const double* src = values->data.data() + b * val_per;
    for (std::size_t j = 0; j < val_per; ++j) dst[(*idx)[j]] = src[j];
  }
  return make_result(base->shape, std::move(out), "scatter", {&tbase, &tvalues},
                     [base, values, idx, batch, base_per, val_per](const TensorImpl& o) {
                       if (base->requires_grad) {
                         std::vector<double> g = o.grad;
                         for (std::size_t b = 0; b < batch; ++b)
                           for (auto j : *idx) g[b * base_per + j] = 0.0;
                         base->accumulate(std::move(g));
                       }
                       if (values->requires_grad) {
                         std::vector<double> g(batch * val_per);
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t j = 0; j < val_per; ++j) g[b * val_per + j] = o.grad[b * base_per + (*idx)[j]];
                         values->accumulate(std::move(g));
                       }
                     });
}

Tensor slice_last(const Tensor& tx, std::size_t begin, std::size_t end) {
  const ImplPtr& x = need(tx, "slice_last");
  if (x->shape.empty() || begin >= end || end > x->shape.back()) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_to_string(x->shape));
  }
  const std::size_t width = x->shape.back();
  const std::size_t rows = x->data.size() / width;
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x->data.data() + r * width + begin, w, out.data() + r * w);
  Shape shape = x->shape;
  shape.back() = w;
  return make_result(std::move(shape), std::move(out), "slice_last", {&tx}, [x, rows, width, begin, w](const TensorImpl& o) {
    std::vector<double> g(rows * width, 0.0);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(o.grad.data() + r * w, w, g.data() + r * width + begin);
    x->accumulate(std::move(g));
  });
}

Tensor concat_last(const Tensor& ta, const Tensor& tb) {
  const ImplPtr& a = need(ta, "concat_last");
  const ImplPtr& b = need(tb, "concat_last");
  if (a->shape.size() != b->shape.size() || a->shape.empty() ||
      !std::equal(a->shape.begin(), a->shape.end() - 1, b->shape.begin())) {
    throw DimensionError("concat_last: incompatible shapes " + shape_to_string(a->shape) + " and " +
                         shape_to_string(b->shape));
  }
  const std::size_t wa = a->shape.back(), wb = b->shape.back(), w = wa + wb;
  const std::size_t rows = a->data.size() / wa;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a->data.data() + r * wa, wa, out.data() + r * w);
    std::copy_n(b->data.data() + r * wb, wb, out.data() + r * w + wa);
  }
  Shape shape = a->shape;
  shape.back() = w;
  return make_result(std::move(shape), std::move(out), "concat_last", {&ta, &tb}, [a, b, rows, wa, wb, w](const TensorImpl& o) {
    if (a->requires_grad) {
      std::vector<double> g(rows * wa);
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(o.grad.data() + r * w, wa, g.data() + r * wa);
      a->accumulate(std::move(g));
    }
    if (b->requires_grad) {
      std::vector<double> g(rows * wb);
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(o.grad.data() + r * w + wa, wb, g.data() + r * wb);
      b->accumulate(std::move(g));
    }
  });
}

Tensor diag(const Tensor& tv) {
  const ImplPtr& v = need(tv, "diag");
  if (v->shape.size() != 1) throw DimensionError("diag expects a vector, got " + shape_to_string(v->shape));
  const std::size_t k = v->shape[0];
  std::vector<double> out(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) out[i * k + i] = v->data[i];
  return make_result({k, k}, std::move(out), "diag", {&tv}, [v, k](const TensorImpl& o) {
    std::vector<double> g(k);
    for (std::size_t i = 0; i < k; ++i) g[i] = o.grad[i * k + i];
    v->accumulate(std::move(g));
  });
}

Tensor log_softmax(const Tensor& tx) {
  const ImplPtr& x = need(tx, "log_softmax");
  if (x->shape.empty()) throw DimensionError("log_softmax needs at least one axis");
  const std::size_t w = x->shape.back();
  const std::size_t rows = x->data.size() / w;
  std::vector<double> out(x->data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x->data.data() + r * w;
    const double m = *std::max_element(row, row + w);
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) s += std::exp(row[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = row[j] - lse;
  }
  return make_result(x->shape, std::move(out), "log_softmax", {&tx}, [x, w, rows](const TensorImpl& o) {
    std::vector<double> g(o.grad.size());
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < w; ++j) gs += o.grad[r * w + j];
      for (std::size_t j = 0; j < w; ++j) g[r * w + j] = o.grad[r * w + j] - std::exp(o.data[r * w + j]) * gs;
    }
    x->accumulate(std::move(g));
  });
}

Tensor batch_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta, double eps, std::vector<double>* batch_mean,
                  std::vector<double>* batch_var) {
  const ImplPtr& x = need(tx, "batch_norm");
  const ImplPtr& gamma = need(tgamma, "batch_norm");
  const ImplPtr& beta = need(tbeta, "batch_norm");
  if (x->shape.size() != 2) throw DimensionError("batch_norm expects [rows, features], got " + shape_to_string(x->shape));
  const std::size_t n = x->shape[0], f = x->shape[1];
  if (gamma->data.size() != f || beta->data.size() != f) throw DimensionError("batch_norm: affine width mismatch");
  auto stats = std::make_shared<std::vector<double>>(2 * f, 0.0);  // mean, then 1/sqrt(var + eps)
  std::vector<double> var(f, 0.0);
  double* __restrict mu = stats->data();
  double* __restrict inv = stats->data() + f;
  double* __restrict vr = var.data();
  const double* __restrict xd = x->data.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j) mu[j] += xd[r * f + j];
  for (std::size_t j = 0; j < f; ++j) mu[j] /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const double d = xd[r * f + j] - mu[j];
      vr[j] += d * d;
    }
  for (std::size_t j = 0; j < f; ++j) {
    vr[j] /= static_cast<double>(n);
    inv[j] = 1.0 / std::sqrt(vr[j] + eps);
  }
  std::vector<double> out(n * f);
  {
    double* __restrict od = out.data();
    const double* __restrict gd = gamma->data.data();
    const double* __restrict bd = beta->data.data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < f; ++j) od[r * f + j] = gd[j] * (xd[r * f + j] - mu[j]) * inv[j] + bd[j];
  }
  if (batch_mean) batch_mean->assign(mu, mu + f);
  if (batch_var) *batch_var = std::move(var);
  return make_result(x->shape, std::move(out), "batch_norm", {&tx, &tgamma, &tbeta},
                     [x, gamma, beta, stats, n, f](const TensorImpl& o) {
                       const double* __restrict xd = x->data.data();
                       const double* __restrict gd = o.grad.data();
                       const double* __restrict mu = stats->data();
                       const double* __restrict inv = stats->data() + f;
                       std::vector<double> sum_g(f, 0.0), sum_gh(f, 0.0);
                       double* __restrict sg = sum_g.data();
                       double* __restrict sgh = sum_gh.data();
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t j = 0; j < f; ++j) {
                           const double g = gd[r * f + j];
                           sg[j] += g;
                           sgh[j] += g * (xd[r * f + j] - mu[j]) * inv[j];
                         }
                       if (x->requires_grad) {
                         const double dn = static_cast<double>(n);
                         std::vector<double> coef(f), mean_g(f), mean_gh(f);
                         for (std::size_t j = 0; j < f; ++j) {
                           coef[j] = gamma->data[j] * inv[j];
                           mean_g[j] = sg[j] / dn;
                           mean_gh[j] = sgh[j] / dn;
                         }
                         std::vector<double> gx(n * f);
                         double* __restrict gxd = gx.data();
                         const double* __restrict cf = coef.data();
                         const double* __restrict mg = mean_g.data();
                         const double* __restrict mgh = mean_gh.data();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t j = 0; j < f; ++j) {
                             const double h = (xd[r * f + j] - mu[j]) * inv[j];
                             gxd[r * f + j] = cf[j] * (gd[r * f + j] - mg[j] - h * mgh[j]);
                           }
                         x->accumulate(std::move(gx));
                       }
                       if (beta->requires_grad) beta->accumulate(std::move(sum_g));
                       if (gamma->requires_grad) gamma->accumulate(std::move(sum_gh));
                     });
}

}  // namespace mixerflow
