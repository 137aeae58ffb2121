#pragma once

#include "s2g/tensor.hpp"

#include <functional>
#include <span>

namespace s2g {

/// Compares the reverse-mode gradient of a scalar function against central
/// differences. Returns the largest elementwise relative error, using
/// max(|analytic|, |numeric|, 1e-8) as the denominator.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& fn, const Matrix& point,
                               double epsilon = 1e-5);

/// Same check over a set of parameter tensors that `loss_fn` closes over.
/// The parameters are perturbed in place and restored.
double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                               double epsilon = 1e-5);

}  // namespace s2g
