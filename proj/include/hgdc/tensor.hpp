#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgdc {

using Shape = std::vector<int>;

/// Thrown when tensor shapes do not satisfy an operation's contract.
/// The message names both offending shapes.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for value-level contract violations (bad mask, empty input, ...).
class ValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& s);
int shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates (+=) into parents
  std::uint64_t id = 0;
  bool requires_grad = false;
};

std::vector<double>& grad_of(Node& n);

}  // namespace detail

/// Dense row-major float64 tensor participating in a reverse-mode gradient
/// graph. Copying a Tensor copies the handle, not the storage; ops build the
/// graph only when an input has requires_grad set, so constant arithmetic
/// stays graph-free.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// N×N identity (the one-hot label embedding matrix is one of these).
  static Tensor identity(int n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int size() const;
  bool requires_grad() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if backward never reached us
  void zero_grad();

  double value() const;            // scalar convenience; size must be 1
  double at(int i) const;          // 1-D
  double at(int i, int j) const;   // 2-D

  /// Value copy cut off from the graph (never requires grad).
  Tensor detached() const;

  const std::shared_ptr<detail::Node>& impl() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of the primitive operations reachable from a root tensor.
/// Creation order is a topological order by construction, so replaying the
/// record back-to-front visits every node after all of its consumers; each
/// node's backward rule then fires exactly once per graph edge.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  /// Seeds d(root)/d(root) = 1 (root must be scalar) and accumulates
  /// gradients into every requires_grad tensor reachable from the root.
  void backward();

  std::size_t size() const { return order_.size(); }

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> order_;  // ascending creation id
};

/// Tape(loss).backward() in one call.
void backward(const Tensor& loss);

// ---- primitives -----------------------------------------------------------
// Each op validates shapes, computes the forward value, and (when an input
// requires grad) registers its backward rule. Gradients accumulate with +=
// so parameters shared across call sites are handled correctly.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
/// Broadcast add/mul of a 1-element tensor against every element of `a`.
Tensor add_scalar(const Tensor& a, const Tensor& s);
Tensor mul_scalar(const Tensor& a, const Tensor& s);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
Tensor matvec(const Tensor& a, const Tensor& x);  // [m,n]x[n]   -> [m]
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat(std::span<const Tensor> parts);          // 1-D, axis 0
Tensor stack_rows(std::span<const Tensor> rows);       // k vectors [d] -> [k,d]
Tensor row(const Tensor& a, int i);                    // [m,n] -> [n]
Tensor slice(const Tensor& a, int start, int len);     // 1-D
Tensor element(const Tensor& a, int i);                // 1-D -> [1]

Tensor reduce_sum(const Tensor& a);  // -> [1]
Tensor row_sums(const Tensor& a);    // [m,n] -> [m]

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// x if x >= 0 else slope*x. Subgradient at exactly 0 is slope.
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

/// Softmax over the entries whose mask is 0; entries masked with -inf come
/// out exactly 0. Stabilized by max-subtraction over the unmasked entries
/// only. Mask values must be 0 or -inf and the mask is non-differentiable.
Tensor masked_softmax(const Tensor& logits, const Tensor& mask);
/// Row-wise masked softmax of a [m,n] matrix against a shared length-n mask.
Tensor masked_softmax_rows(const Tensor& logits, const Tensor& mask);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace hgdc
