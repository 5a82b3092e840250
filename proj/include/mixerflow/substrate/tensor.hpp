#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mixerflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded operation. `backward` reads the gradient of the output it
// produced and accumulates into the gradients of `inputs`.
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool released = false;  // graph through this tensor was consumed by backward()
  std::shared_ptr<Node> node;

  void accumulate(std::span<const double> g);
  void accumulate(std::vector<double>&& g);
  void accumulate_at(std::size_t i, double g);
};

}  // namespace detail

/// Dense row-major array of doubles that can take part in reverse-mode differentiation.
///
/// Copies are shallow: two Tensor values may share one buffer. Operations never mutate
/// their operands; only leaves (parameters) are updated in place by optimizers.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// A leaf that accumulates gradient.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view; only valid on tensors that are not the output of a recorded operation.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  /// Gradient accumulated by backward(); zeros when nothing reached this tensor.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

struct Parameter {
  std::string name;
  Tensor value;

  Tensor gradient() const;
};

/// Non-trainable state that must survive checkpointing (running statistics, flags, signs).
struct Buffer {
  std::string name;
  Tensor value;
};

// ---------------------------------------------------------------------------
// Recording control

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Propagates d(loss)/d(leaf) into every reachable leaf that requires gradient.
/// The recorded graph is released afterwards; a second call on the same loss throws ContractError.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Operations. Binary elementwise operations accept equal shapes or a second (or first)
// operand whose shape is a trailing suffix of the other's, broadcast over the leading axes;
// a single-element operand broadcasts everywhere.

Tensor matmul(const Tensor& a, const Tensor& b);
/// y = x w^T + bias for x [n, in], w [out, in], bias [out] (bias may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

enum class GeluKind { exact, tanh };

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x, GeluKind kind = GeluKind::exact);
Tensor negate(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::vector<std::size_t> axes);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::vector<std::size_t> axes);
Tensor max(const Tensor& x);
Tensor max(const Tensor& x, std::vector<std::size_t> axes);

Tensor reshape(const Tensor& x, Shape shape);
/// Repeats `x` over leading axes so that the result has `shape` (trailing-suffix rule).
Tensor broadcast_to(const Tensor& x, Shape shape);

/// Per-sample gather: x has shape [b, ...] with S elements per sample; the result has shape
/// [b, sample_shape...] and out[i, j] = x[i, index[j]].
Tensor gather(const Tensor& x, std::span<const std::size_t> index, const Shape& sample_shape);
/// Per-sample scatter: out = base with out[i, index[j]] = values[i, j].
Tensor scatter(const Tensor& base, const Tensor& values, std::span<const std::size_t> index);

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_last(const Tensor& a, const Tensor& b);
/// Square matrix with `v` on the diagonal.
Tensor diag(const Tensor& v);
Tensor log_softmax(const Tensor& x);

/// Training-mode batch normalization over the rows of x [n, f]. Writes the batch mean and
/// biased variance (per feature) when the output pointers are non-null.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* batch_mean = nullptr, std::vector<double>* batch_var = nullptr);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return negate(a); }

}  // namespace mixerflow
