#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2g {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Matrix& m);

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool released = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents.
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

}  // namespace detail

/// Handle to a node of the computation graph. Copies share the node.
///
/// Operations on tensors that require gradients record a backward closure;
/// the recorded closures form the tape that `backward` replays in reverse
/// topological order and then releases.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(Scalar v);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == value().size() && value().size() > 0; }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  Scalar item() const;
  Scalar operator()(Index r, Index c) const { return value()(r, c); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Thread-local switch: when disabled, operations record nothing.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a scalar loss. Populates `grad` on every reachable
/// tensor that requires gradients, then releases the recorded tape.
/// Throws std::logic_error when the tape of `loss` was already consumed.
void backward(const Tensor& loss);

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Wraps a forward value; records `fn` when grad mode is on and any input
// requires gradients.
Tensor record(Matrix value, std::vector<Tensor> inputs, BackwardFn fn);

}  // namespace detail

}  // namespace s2g
