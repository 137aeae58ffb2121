#pragma once

#include "s2g/tensor.hpp"

namespace s2g {

/// -log softmax(logits)[target] for a [1 x n] row. Entries of -inf are
/// allowed (masked classes) as long as the target is finite.
Tensor cross_entropy_loss(const Tensor& logits, int target_index);

/// Mean per-entry binary cross entropy of sigmoid(logits) against 0/1 flags.
Tensor cross_entropy_loss(const Tensor& logits, const Matrix& target_multi_hot);

/// sum_i P_i log(P_i / Q_i) with P the model distribution and Q the target.
/// 0 log 0 is taken as 0; log arguments are clamped at 1e-12. Both inputs
/// must be probability distributions (sum 1 within 1e-9, entries >= 0).
Tensor kl_divergence_loss(const Tensor& model_dist, const Tensor& target_dist);

}  // namespace s2g
