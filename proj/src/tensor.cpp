#include "hgdc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace hgdc {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check(bool cond, const std::string& msg) {
  if (!cond) throw ValueError(msg);
}

void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  check_shape(a.shape() == b.shape(),
              std::string(op) + ": shapes disagree: " + shape_str(a.shape()) +
                  " vs " + shape_str(b.shape()));
}

void check_2d(const char* op, const Tensor& a) {
  check_shape(a.shape().size() == 2, std::string(op) + ": expected a matrix, got " +
                                         shape_str(a.shape()));
}

void check_1d(const char* op, const Tensor& a) {
  check_shape(a.shape().size() == 1, std::string(op) + ": expected a vector, got " +
                                         shape_str(a.shape()));
}

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

/// Builds an op node. Parents and the backward rule are attached only when
/// some input carries a gradient requirement; otherwise the result is a
/// plain constant and the inputs can be freed.
Tensor make_op(Shape shape, std::vector<double> values,
               std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward_fn) {
  bool needs_grad = false;
  for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
  auto n = make_leaf(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& t : inputs) n->parents.push_back(t.impl());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(n));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) {
    check(d >= 0, "shape dimensions must be non-negative");
    n *= d;
  }
  return n;
}

namespace detail {

std::vector<double>& grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

}  // namespace detail

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  int n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape_numel(shape) == static_cast<int>(values.size()),
              "Tensor::from: " + std::to_string(values.size()) +
                  " values do not fill shape " + shape_str(shape));
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

Tensor Tensor::identity(int n, bool requires_grad) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  return Tensor(make_leaf({n, n}, std::move(v), requires_grad));
}

const Shape& Tensor::shape() const {
  check(defined(), "use of an undefined tensor");
  return node_->shape;
}

int Tensor::size() const { return static_cast<int>(values().size()); }

bool Tensor::requires_grad() const {
  check(defined(), "use of an undefined tensor");
  return node_->requires_grad;
}

std::vector<double>& Tensor::values() {
  check(defined(), "use of an undefined tensor");
  return node_->values;
}

const std::vector<double>& Tensor::values() const {
  check(defined(), "use of an undefined tensor");
  return node_->values;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  check(defined(), "use of an undefined tensor");
  check(!node_->grad.empty(), "tensor has no gradient; run backward() first");
  return node_->grad;
}

void Tensor::zero_grad() {
  check(defined(), "use of an undefined tensor");
  node_->grad.clear();
}

double Tensor::value() const {
  check_shape(size() == 1, "value(): tensor is not scalar, shape " + shape_str(shape()));
  return values()[0];
}

double Tensor::at(int i) const {
  check_1d("at", *this);
  return values()[static_cast<std::size_t>(i)];
}

double Tensor::at(int i, int j) const {
  check_2d("at", *this);
  return values()[static_cast<std::size_t>(i) * shape()[1] + j];
}

Tensor Tensor::detached() const {
  check(defined(), "use of an undefined tensor");
  return Tensor(make_leaf(node_->shape, node_->values, false));
}

// ---- Tape ------------------------------------------------------------------

Tape::Tape(const Tensor& root) : root_(root.impl()) {
  check(root.defined(), "Tape: undefined root");
  // Iterative DFS over parent edges; creation ids give the replay order.
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root_.get()};
  seen.insert(root_.get());
  std::unordered_set<const detail::Node*> kept;
  std::vector<std::shared_ptr<detail::Node>> nodes;
  nodes.push_back(root_);
  kept.insert(root_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) {
        stack.push_back(p.get());
        if (kept.insert(p.get()).second) nodes.push_back(p);
      }
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->id < b->id; });
  order_ = std::move(nodes);
}

void Tape::backward() {
  check_shape(root_->values.size() == 1,
              "backward: root must be scalar, shape " + shape_str(root_->shape));
  detail::grad_of(*root_)[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node& n = **it;
    if (!n.requires_grad || !n.backward_fn) continue;
    if (n.grad.empty()) continue;  // not on a path to the root
    n.backward_fn(n);
  }
}

void backward(const Tensor& loss) { Tape(loss).backward(); }

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (int p = 0; p < 2; ++p) {
      detail::Node& par = *self.parents[p];
      if (!par.requires_grad) continue;
      auto& g = detail::grad_of(par);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.parents[0]->values;
    const auto& bv2 = self.parents[1]->values;
    if (self.parents[0]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv2[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& v : out) v *= c;
  return make_op(a.shape(), std::move(out), {a}, [c](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, const Tensor& s) {
  check_shape(s.size() == 1, "add_scalar: scalar operand has shape " +
                                 shape_str(s.shape()));
  double sv = s.values()[0];
  std::vector<double> out(a.values());
  for (auto& v : out) v += sv;
  return make_op(a.shape(), std::move(out), {a, s}, [](detail::Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[1]);
      double acc = 0.0;
      for (double gv : self.grad) acc += gv;
      g[0] += acc;
    }
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  check_shape(s.size() == 1, "mul_scalar: scalar operand has shape " +
                                 shape_str(s.shape()));
  double sv = s.values()[0];
  std::vector<double> out(a.values());
  for (auto& v : out) v *= sv;
  return make_op(a.shape(), std::move(out), {a, s}, [](detail::Node& self) {
    const auto& av = self.parents[0]->values;
    double sv2 = self.parents[1]->values[0];
    if (self.parents[0]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sv2 * self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = detail::grad_of(*self.parents[1]);
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      g[0] += acc;
    }
  });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d("matmul", a);
  check_2d("matmul", b);
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  check_shape(k == k2, "matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const double ail = av[static_cast<std::size_t>(i) * k + l];
      if (ail == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(l) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const auto& av2 = self.parents[0]->values;
    const auto& bv2 = self.parents[1]->values;
    if (self.parents[0]->requires_grad) {
      // dA = dC * B^T
      auto& ga = detail::grad_of(*self.parents[0]);
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j)
            acc += self.grad[static_cast<std::size_t>(i) * n + j] *
                   bv2[static_cast<std::size_t>(l) * n + j];
          ga[static_cast<std::size_t>(i) * k + l] += acc;
        }
    }
    if (self.parents[1]->requires_grad) {
      // dB = A^T * dC
      auto& gb = detail::grad_of(*self.parents[1]);
      for (int l = 0; l < k; ++l)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i)
            acc += av2[static_cast<std::size_t>(i) * k + l] *
                   self.grad[static_cast<std::size_t>(i) * n + j];
          gb[static_cast<std::size_t>(l) * n + j] += acc;
        }
    }
  });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  check_2d("matvec", a);
  check_1d("matvec", x);
  const int m = a.shape()[0], n = a.shape()[1];
  check_shape(n == x.shape()[0], "matvec: dimensions disagree: " + shape_str(a.shape()) +
                                     " vs " + shape_str(x.shape()));
  const auto& av = a.values();
  const auto& xv = x.values();
  std::vector<double> out(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* arow = &av[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) acc += arow[j] * xv[j];
    out[i] = acc;
  }
  return make_op({m}, std::move(out), {a, x}, [m, n](detail::Node& self) {
    const auto& av2 = self.parents[0]->values;
    const auto& xv2 = self.parents[1]->values;
    if (self.parents[0]->requires_grad) {
      auto& ga = detail::grad_of(*self.parents[0]);
      for (int i = 0; i < m; ++i) {
        const double gi = self.grad[i];
        if (gi == 0.0) continue;
        double* grow = &ga[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) grow[j] += gi * xv2[j];
      }
    }
    if (self.parents[1]->requires_grad) {
      auto& gx = detail::grad_of(*self.parents[1]);
      for (int i = 0; i < m; ++i) {
        const double gi = self.grad[i];
        if (gi == 0.0) continue;
        const double* arow = &av2[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) gx[j] += gi * arow[j];
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  check_2d("transpose", a);
  const int m = a.shape()[0], n = a.shape()[1];
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  return make_op({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        g[static_cast<std::size_t>(i) * n + j] += self.grad[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape_numel(shape) == a.size(),
              "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  return make_op(std::move(shape), a.values(), {a}, [](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- structural -------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts) {
  check(!parts.empty(), "concat: empty input list");
  std::vector<double> out;
  std::vector<int> offsets;
  std::vector<Tensor> inputs;
  int total = 0;
  for (const auto& p : parts) {
    check_1d("concat", p);
    offsets.push_back(total);
    total += p.size();
    out.insert(out.end(), p.values().begin(), p.values().end());
    inputs.push_back(p);
  }
  return make_op({total}, std::move(out), std::move(inputs),
                 [offsets](detail::Node& self) {
                   for (std::size_t p = 0; p < self.parents.size(); ++p) {
                     detail::Node& par = *self.parents[p];
                     if (!par.requires_grad) continue;
                     auto& g = detail::grad_of(par);
                     const int off = offsets[p];
                     for (std::size_t i = 0; i < g.size(); ++i)
                       g[i] += self.grad[off + i];
                   }
                 });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  check(!rows.empty(), "stack_rows: empty input list");
  const int d = rows.front().size();
  std::vector<double> out;
  std::vector<Tensor> inputs;
  for (const auto& r : rows) {
    check_1d("stack_rows", r);
    check_shape(r.size() == d, "stack_rows: row shapes disagree: " +
                                   shape_str(rows.front().shape()) + " vs " +
                                   shape_str(r.shape()));
    out.insert(out.end(), r.values().begin(), r.values().end());
    inputs.push_back(r);
  }
  const int k = static_cast<int>(rows.size());
  return make_op({k, d}, std::move(out), std::move(inputs), [d](detail::Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      detail::Node& par = *self.parents[p];
      if (!par.requires_grad) continue;
      auto& g = detail::grad_of(par);
      const std::size_t off = p * static_cast<std::size_t>(d);
      for (int i = 0; i < d; ++i) g[i] += self.grad[off + i];
    }
  });
}

Tensor row(const Tensor& a, int i) {
  check_2d("row", a);
  const int m = a.shape()[0], n = a.shape()[1];
  check(i >= 0 && i < m, "row: index " + std::to_string(i) + " out of range for " +
                             shape_str(a.shape()));
  const auto& av = a.values();
  std::vector<double> out(av.begin() + static_cast<std::size_t>(i) * n,
                          av.begin() + static_cast<std::size_t>(i + 1) * n);
  return make_op({n}, std::move(out), {a}, [i, n](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(i) * n + j] += self.grad[j];
  });
}

Tensor slice(const Tensor& a, int start, int len) {
  check_1d("slice", a);
  check(start >= 0 && len >= 0 && start + len <= a.size(),
        "slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of range for " + shape_str(a.shape()));
  const auto& av = a.values();
  std::vector<double> out(av.begin() + start, av.begin() + start + len);
  return make_op({len}, std::move(out), {a}, [start](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t j = 0; j < self.grad.size(); ++j) g[start + j] += self.grad[j];
  });
}

Tensor element(const Tensor& a, int i) { return slice(a, i, 1); }

// ---- reductions ---------------------------------------------------------------

Tensor reduce_sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_op({1}, {acc}, {a}, [](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    const double gv = self.grad[0];
    for (auto& x : g) x += gv;
  });
}

Tensor row_sums(const Tensor& a) {
  check_2d("row_sums", a);
  const int m = a.shape()[0], n = a.shape()[1];
  const auto& av = a.values();
  std::vector<double> out(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += av[static_cast<std::size_t>(i) * n + j];
    out[i] = acc;
  }
  return make_op({m}, std::move(out), {a}, [m, n](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (int i = 0; i < m; ++i) {
      const double gi = self.grad[i];
      for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(i) * n + j] += gi;
    }
  });
}

// ---- nonlinearities ------------------------------------------------------------

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = 1.0 / (1.0 + std::exp(-v));
  return make_op(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.values[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = std::tanh(v);
  return make_op(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.values[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  check(slope > 0.0 && slope < 1.0,
        "leaky_relu: slope must be in (0,1), got " + std::to_string(slope));
  std::vector<double> out(a.values());
  for (auto& v : out) v = v >= 0.0 ? v : slope * v;
  return make_op(a.shape(), std::move(out), {a}, [slope](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const auto& x = self.parents[0]->values;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * (x[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = std::log(v);
  return make_op(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const auto& x = self.parents[0]->values;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / x[i];
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  check(lo <= hi, "clamp: lo > hi");
  std::vector<double> out(a.values());
  for (auto& v : out) v = std::min(hi, std::max(lo, v));
  return make_op(a.shape(), std::move(out), {a}, [lo, hi](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const auto& x = self.parents[0]->values;
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > lo && x[i] < hi) g[i] += self.grad[i];
  });
}

// ---- masked softmax -------------------------------------------------------------

namespace {

void check_mask(const Tensor& mask) {
  check(!mask.requires_grad(), "masked_softmax: mask is not differentiable");
  for (double m : mask.values())
    check(m == 0.0 || m == kNegInf,
          "masked_softmax: mask entries must be 0 or -inf");
}

// Softmax of one row under the mask, writing into out[0..n).
void masked_softmax_row(const double* logits, const double* mask, int n, double* out) {
  double mx = kNegInf;
  for (int i = 0; i < n; ++i)
    if (mask[i] == 0.0 && logits[i] > mx) mx = logits[i];
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) {
      out[i] = std::exp(logits[i] - mx);
      denom += out[i];
    } else {
      out[i] = 0.0;
    }
  }
  for (int i = 0; i < n; ++i) out[i] /= denom;
}

// dL/dlogit_i = y_i * (g_i - sum_j g_j y_j) over the unmasked entries.
void masked_softmax_row_backward(const double* y, const double* mask, const double* g,
                                 int n, double* out_grad) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i)
    if (mask[i] == 0.0) dot += g[i] * y[i];
  for (int i = 0; i < n; ++i)
    if (mask[i] == 0.0) out_grad[i] += y[i] * (g[i] - dot);
}

}  // namespace

Tensor masked_softmax(const Tensor& logits, const Tensor& mask) {
  check_1d("masked_softmax", logits);
  check_same_shape("masked_softmax", logits, mask);
  check_mask(mask);
  const int n = logits.size();
  bool any_open = false;
  for (double m : mask.values()) any_open = any_open || (m == 0.0);
  check(any_open, "masked_softmax: all entries masked");
  std::vector<double> out(n);
  masked_softmax_row(logits.values().data(), mask.values().data(), n, out.data());
  return make_op({n}, std::move(out), {logits, mask}, [n](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    masked_softmax_row_backward(self.values.data(), self.parents[1]->values.data(),
                                self.grad.data(), n, g.data());
  });
}

Tensor masked_softmax_rows(const Tensor& logits, const Tensor& mask) {
  check_2d("masked_softmax_rows", logits);
  check_1d("masked_softmax_rows", mask);
  const int m = logits.shape()[0], n = logits.shape()[1];
  check_shape(mask.size() == n, "masked_softmax_rows: mask shape " +
                                    shape_str(mask.shape()) + " does not match " +
                                    shape_str(logits.shape()));
  check_mask(mask);
  bool any_open = false;
  for (double mv : mask.values()) any_open = any_open || (mv == 0.0);
  check(any_open, "masked_softmax_rows: all entries masked");
  std::vector<double> out(logits.values().size());
  for (int i = 0; i < m; ++i)
    masked_softmax_row(&logits.values()[static_cast<std::size_t>(i) * n],
                       mask.values().data(), n, &out[static_cast<std::size_t>(i) * n]);
  return make_op({m, n}, std::move(out), {logits, mask}, [m, n](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = detail::grad_of(*self.parents[0]);
    const double* mk = self.parents[1]->values.data();
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      masked_softmax_row_backward(&self.values[off], mk, &self.grad[off], n, &g[off]);
    }
  });
}

}  // namespace hgdc
