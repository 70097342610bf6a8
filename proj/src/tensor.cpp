#include "blindnav/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace blindnav::grad {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

thread_local bool g_grad_enabled = true;

std::pair<std::size_t, std::size_t> matrix_dims(const Shape& s) {
  switch (s.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, s[0]};
    default:
      return {s[0], s[1]};
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " +
                   shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

bool tracks(const Tensor& t) { return g_grad_enabled && t.requires_grad(); }

// Output node wired to its parents when any of them needs a gradient.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor* t) { return tracks(*t); });
  if (needs) {
    node->requires_grad = true;
    node->grad.assign(node->data.size(), 0.0);
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

bool row_broadcast(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols() &&
         a.shape() != b.shape();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  auto in = x.data();
  std::transform(in.begin(), in.end(), out.begin(), fwd);
  return make_result(x.shape(), std::move(out), {&x}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i)
      p.grad[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.size() > 2)
    throw ShapeError("tensor rank above 2 unsupported: " + shape_string(shape));
  if (shape_numel(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const { return matrix_dims(shape()).first; }
std::size_t Tensor::cols() const { return matrix_dims(shape()).second; }

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item() on non-scalar " + shape_string(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(shape(), node_->data, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    mismatch("matmul", a, b);
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    ConstMap g(self.grad.data(), m, n);
    if (pa.requires_grad)
      MutMap(pa.grad.data(), m, k).noalias() +=
          g * ConstMap(pb.data.data(), k, n).transpose();
    if (pb.requires_grad)
      MutMap(pb.grad.data(), k, n).noalias() +=
          ConstMap(pa.data.data(), m, k).transpose() * g;
  });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const char* name, Binary kind, const Tensor& a, const Tensor& b) {
  const bool bcast = row_broadcast(a, b);
  if (!bcast && a.shape() != b.shape()) mismatch(name, a, b);
  const std::size_t n = a.size(), width = b.size();
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double yi = y[bcast ? i % width : i];
    switch (kind) {
      case Binary::kAdd: out[i] = x[i] + yi; break;
      case Binary::kSub: out[i] = x[i] - yi; break;
      case Binary::kMul: out[i] = x[i] * yi; break;
    }
  }
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [kind, bcast, width](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const std::size_t j = bcast ? i % width : i;
      const double g = self.grad[i];
      switch (kind) {
        case Binary::kAdd:
          if (pa.requires_grad) pa.grad[i] += g;
          if (pb.requires_grad) pb.grad[j] += g;
          break;
        case Binary::kSub:
          if (pa.requires_grad) pa.grad[i] += g;
          if (pb.requires_grad) pb.grad[j] -= g;
          break;
        case Binary::kMul:
          if (pa.requires_grad) pa.grad[i] += g * pb.data[j];
          if (pb.requires_grad) pb.grad[j] += g * pa.data[i];
          break;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", Binary::kAdd, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", Binary::kSub, a, b);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", Binary::kMul, a, b);
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0 || a.rows() != b.rows())
    mismatch("concat", a, b);
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + r * ca, ca, out.begin() + r * (ca + cb));
    std::copy_n(b.data().begin() + r * cb, cb,
                out.begin() + r * (ca + cb) + ca);
  }
  Shape shape = a.rank() == 1 ? Shape{ca + cb} : Shape{rows, ca + cb};
  return make_result(std::move(shape), std::move(out), {&a, &b},
                     [rows, ca, cb](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * (ca + cb);
      if (pa.requires_grad)
        for (std::size_t c = 0; c < ca; ++c) pa.grad[r * ca + c] += g[c];
      if (pb.requires_grad)
        for (std::size_t c = 0; c < cb; ++c) pb.grad[r * cb + c] += g[ca + c];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double in, double) { return 2.0 * in; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward() requires a scalar loss, got " +
                     (loss.defined() ? shape_string(loss.shape()) : "null"));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (n->backward_fn) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace blindnav::grad
