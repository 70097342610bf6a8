#pragma once

// Dense reverse-mode automatic differentiation over row-major double arrays.
//
// Tensors are rank 0, 1 or 2. Every op records a backward closure on its
// output when at least one input requires a gradient, and backward() walks
// the recorded graph in reverse topological order. Only first derivatives
// are supported.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blindnav::grad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised for non-conforming operand shapes and other graph misuse.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data only when requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  // Rank-2 view: rank 1 tensors are a single row, scalars are 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  std::span<double> grad() { return node_->grad; }
  std::span<const double> grad() const { return node_->grad; }

  double item() const;
  double at(std::size_t row, std::size_t col) const {
    return node_->data[row * cols() + col];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !node_->backward_fn; }
  void zero_grad();

  /// Fresh leaf holding a copy of the values, with no history.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// While alive, ops on this thread record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise with equal shapes, or b broadcast as a row over every row of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor concat(const Tensor& a, const Tensor& b);  // along the last axis
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Accumulates d(loss)/d(node) into every differentiable leaf reachable from
/// a scalar loss. Interior gradients are recomputed on every call.
void backward(const Tensor& loss);

}  // namespace blindnav::grad
