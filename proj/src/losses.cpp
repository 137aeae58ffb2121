#include "s2g/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace s2g {

using detail::Node;

namespace {

constexpr Scalar kLogFloor = 1e-12;

void check_row(const Tensor& t, const char* what) {
  if (t.rows() != 1 || t.cols() == 0) throw ShapeError(std::string(what) + ": expected a [1xn] row, got " + shape_string(t.value()));
}

void check_distribution(const Matrix& p, const char* which) {
  if ((p.array() < 0.0).any() || !p.allFinite())
    throw std::domain_error(std::string("kl_divergence_loss: ") + which + " has negative or non-finite entries");
  if (std::abs(p.sum() - 1.0) > 1e-9)
    throw std::domain_error(std::string("kl_divergence_loss: ") + which + " is not normalized (sum " +
                            std::to_string(p.sum()) + ")");
}

}  // namespace

Tensor cross_entropy_loss(const Tensor& logits, int target_index) {
  check_row(logits, "cross_entropy_loss");
  const RowVector x = logits.value().row(0);
  if (target_index < 0 || target_index >= x.size())
    throw std::out_of_range("cross_entropy_loss: target " + std::to_string(target_index) + " outside [0, " +
                            std::to_string(x.size()) + ")");
  const Scalar m = x.maxCoeff();
  const Scalar lse = m + std::log((x.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - x(target_index);
  RowVector p = (x.array() - lse).exp().matrix();
  return detail::record(std::move(out), {logits}, [p = std::move(p), target_index](Node& self) {
    Matrix g = p;
    g(0, target_index) -= 1.0;
    self.parents[0]->accumulate(g * self.grad(0, 0));
  });
}

Tensor cross_entropy_loss(const Tensor& logits, const Matrix& target_multi_hot) {
  check_row(logits, "cross_entropy_loss");
  if (target_multi_hot.rows() != 1 || target_multi_hot.cols() != logits.cols())
    throw ShapeError("cross_entropy_loss: multi-hot target " + shape_string(target_multi_hot) + " vs logits " +
                     shape_string(logits.value()));
  if (((target_multi_hot.array() != 0.0) && (target_multi_hot.array() != 1.0)).any())
    throw std::domain_error("cross_entropy_loss: multi-hot target must be 0/1");
  const auto x = logits.value().array();
  const auto y = target_multi_hot.array();
  const Scalar n = static_cast<Scalar>(x.size());
  Matrix out(1, 1);
  out(0, 0) = (x.max(0.0) - x * y + (1.0 + (-x.abs()).exp()).log()).sum() / n;
  Matrix g = ((1.0 / (1.0 + (-x).exp())) - y).matrix() / n;
  return detail::record(std::move(out), {logits}, [g = std::move(g)](Node& self) {
    self.parents[0]->accumulate(g * self.grad(0, 0));
  });
}

Tensor kl_divergence_loss(const Tensor& model_dist, const Tensor& target_dist) {
  if (model_dist.rows() != target_dist.rows() || model_dist.cols() != target_dist.cols())
    throw ShapeError("kl_divergence_loss: " + shape_string(model_dist.value()) + " vs " +
                     shape_string(target_dist.value()));
  check_distribution(model_dist.value(), "model distribution");
  check_distribution(target_dist.value(), "target distribution");
  const auto p = model_dist.value().array();
  const auto q = target_dist.value().array();
  Eigen::ArrayXXd log_ratio = p.max(kLogFloor).log() - q.max(kLogFloor).log();
  Scalar kl = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) kl += p(i) * log_ratio(i);
  }
  Matrix out(1, 1);
  out(0, 0) = std::max(kl, 0.0);
  Matrix gp = (log_ratio + 1.0).matrix();
  Matrix gq = (-p / q.max(kLogFloor)).matrix();
  return detail::record(std::move(out), {model_dist, target_dist},
                        [gp = std::move(gp), gq = std::move(gq)](Node& self) {
                          const Scalar g = self.grad(0, 0);
                          if (self.parents[0]->requires_grad) self.parents[0]->accumulate(gp * g);
                          if (self.parents[1]->requires_grad) self.parents[1]->accumulate(gq * g);
                        });
}

}  // namespace s2g
