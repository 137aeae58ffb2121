#include "s2g/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace s2g {

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& fn, const Matrix& point,
                               double epsilon) {
  Tensor x = Tensor::parameter(point);
  x.zero_grad();
  backward(fn(x));
  const Matrix analytic = x.grad();

  NoGradGuard no_grad;
  double worst = 0.0;
  Matrix probe = point;
  for (Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + epsilon;
    const double up = fn(Tensor::constant(probe)).item();
    probe.data()[i] = orig - epsilon;
    const double down = fn(Tensor::constant(probe)).item();
    probe.data()[i] = orig;
    worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (2.0 * epsilon)));
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                               double epsilon) {
  for (auto& p : params) p.zero_grad();
  backward(loss_fn());
  std::vector<Matrix> analytic;
  for (auto& p : params) analytic.push_back(p.grad());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = params[k].mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + epsilon;
      const double up = loss_fn().item();
      v.data()[i] = orig - epsilon;
      const double down = loss_fn().item();
      v.data()[i] = orig;
      worst = std::max(worst, relative_error(analytic[k].data()[i], (up - down) / (2.0 * epsilon)));
    }
  }
  return worst;
}

}  // namespace s2g
