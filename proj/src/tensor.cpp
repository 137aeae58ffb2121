#include "s2g/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace s2g {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

namespace detail {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

}  // namespace detail

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Scalar v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m));
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

void Tensor::zero_grad() { node_->grad = Matrix::Zero(rows(), cols()); }

Scalar Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(value()));
  return value()(0, 0);
}

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_string(loss.value()));
  if (root->released) throw std::logic_error("backward() called twice on the same tape");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && n->grad.size() > 0) n->backward(*n);
  }
  // Release the tape: interior nodes drop their closures and parents.
  for (detail::Node* n : order) {
    if (!n->backward) continue;
    n->backward = nullptr;
    n->parents.clear();
    n->released = true;
  }
  root->released = true;
}

namespace detail {

Tensor record(Matrix value, std::vector<Tensor> inputs, BackwardFn fn) {
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& t : inputs) {
      if (t.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (!needs) return Tensor::constant(std::move(value));
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (auto& t : inputs) node->parents.push_back(t.node());
  node->backward = std::move(fn);
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

}  // namespace s2g
