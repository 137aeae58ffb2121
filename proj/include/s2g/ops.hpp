#pragma once

#include "s2g/tensor.hpp"

#include <optional>
#include <random>
#include <span>

namespace s2g {

// Differentiable primitives over rank-2 tensors. Binary elementwise ops
// broadcast the second operand when it is 1xN, Mx1 or 1x1.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
/// Adds a constant matrix (no gradient to `c`), broadcast like `add`.
Tensor add_constant(const Tensor& a, const Matrix& c);

Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// tanh-approximated GELU, as used by BERT-family encoders.
Tensor gelu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column-wise mean over rows: [m x n] -> [1 x n].
Tensor mean_rows(const Tensor& a);

enum class Axis { Rows, Cols };
/// Max reduction. Axis::Cols reduces each row to one value ([m x 1]);
/// Axis::Rows reduces each column ([1 x n]). Gradient flows to the first
/// maximal entry.
Tensor reduce_max(const Tensor& a, Axis axis);

/// Row-wise softmax of `logits + mask`. The mask is additive (0 or -inf)
/// and may be [m x n] or a single [1 x n] row. Masked entries come out
/// exactly 0. Throws std::domain_error when a row has no finite entry.
Tensor masked_softmax(const Tensor& logits, const Matrix* mask = nullptr);
inline Tensor softmax(const Tensor& logits) { return masked_softmax(logits, nullptr); }
Tensor log_softmax(const Tensor& logits);

/// Row-wise layer normalization with learned gain and bias ([1 x n] each).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = 1e-5);

/// Selects rows of `table` (embedding lookup / position gather).
Tensor gather_rows(const Tensor& table, std::span<const int> rows);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor vstack(std::span<const Tensor> parts);
Tensor hstack(std::span<const Tensor> parts);

/// Inverted dropout. Identity when rate is 0 or `rng` is null.
Tensor dropout(const Tensor& a, Scalar rate, std::mt19937_64* rng);

/// Stops gradient flow.
inline Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

}  // namespace s2g
