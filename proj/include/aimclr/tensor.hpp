#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aimclr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible; the message names the
/// operation and both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad();
};
}  // namespace detail

/// Dense row-major array of doubles that may participate in a recorded
/// computation. Copies share storage (handle semantics), like parameters in
/// most autograd frameworks.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // Only leaves may be written; tape inputs must not be mutated before backward.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Fresh leaf holding a copy of the values, detached from any recording.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>);

  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable operations. Constructing a tape makes it
/// the active recorder on the current thread until it is destroyed; nesting
/// restores the outer tape. Operations whose inputs require gradients are
/// appended in execution order, so the record is topologically sorted.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and walks the record once in reverse.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Suspends recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

Tensor make_result(Shape shape, std::vector<double> values);

// ---------------------------------------------------------------------------
// Operation catalog. Elementwise binaries broadcast numpy-style over trailing
// axes (sizes equal or 1).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// Multiplies by a constant mask; the mask never receives gradient.
Tensor masked_mul(const Tensor& x, const Tensor& mask);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
// log Σ exp over `axis`, restricted to entries where mask != 0 (mask has the
// input's shape and is constant). An all-zero mask slice yields -inf.
Tensor logsumexp(const Tensor& x, std::size_t axis, const Tensor& mask = {});
Tensor l2_normalize(const Tensor& x, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
// Selects index `index` along `axis`, dropping that axis.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);

/// Temporal convolution over channels-last input.
///   x: [N, T, V, Cin], weight: [K, Cin, Cout] -> [N, T', V, Cout]
/// with zero padding (K-1)/2 on both ends and T' = (T + 2*pad - K)/stride + 1.
Tensor temporal_conv(const Tensor& x, const Tensor& weight, std::size_t stride);

}  // namespace aimclr
