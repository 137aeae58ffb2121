#include "s2g/ops.hpp"

#include <cmath>
#include <limits>

namespace s2g {

using detail::Node;
using detail::record;

namespace {

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

enum class Broadcast { Same, Row, Col, Scalar1 };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar1;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
}

Matrix expand(const Matrix& b, Broadcast kind, Index rows, Index cols) {
  switch (kind) {
    case Broadcast::Same: return b;
    case Broadcast::Row: return b.replicate(rows, 1);
    case Broadcast::Col: return b.replicate(1, cols);
    case Broadcast::Scalar1: return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce_to(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::Same: return g;
    case Broadcast::Row: return g.colwise().sum();
    case Broadcast::Col: return g.rowwise().sum();
    case Broadcast::Scalar1: {
      Matrix s(1, 1);
      s(0, 0) = g.sum();
      return s;
    }
  }
  return g;
}

Matrix plus_broadcast(const Matrix& a, const Matrix& b, Broadcast kind) {
  switch (kind) {
    case Broadcast::Same: return a + b;
    case Broadcast::Row: return a.rowwise() + b.row(0);
    case Broadcast::Col: return a.colwise() + b.col(0);
    case Broadcast::Scalar1: return a.array() + b(0, 0);
  }
  return a;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.value()) + " * " + shape_string(b.value()));
  Matrix out = a.value() * b.value();
  return record(std::move(out), {a, b}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.accumulate_expr(self.grad * b.value.transpose());
    if (b.requires_grad) b.accumulate_expr(a.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_string(a.value()) + " * " +
                     shape_string(b.value()) + "^T");
  Matrix out = a.value() * b.value().transpose();
  return record(std::move(out), {a, b}, [](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.accumulate_expr(self.grad * b.value);
    if (b.requires_grad) b.accumulate_expr(self.grad.transpose() * a.value);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return record(std::move(out), {a}, [](Node& self) {
    Node& a = parent(self, 0);
    a.accumulate_expr(self.grad.transpose());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  Matrix out = plus_broadcast(a.value(), b.value(), kind);
  return record(std::move(out), {a, b}, [kind](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.accumulate_expr(self.grad);
    if (b.requires_grad) b.accumulate(reduce_to(self.grad, kind));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "sub");
  Matrix out = plus_broadcast(a.value(), -b.value(), kind);
  return record(std::move(out), {a, b}, [kind](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.accumulate_expr(self.grad);
    if (b.requires_grad) b.accumulate(-reduce_to(self.grad, kind));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
  Matrix bx = expand(b.value(), kind, a.rows(), a.cols());
  Matrix out = a.value().cwiseProduct(bx);
  return record(std::move(out), {a, b}, [kind, bx = std::move(bx)](Node& self) {
    Node& a = parent(self, 0);
    Node& b = parent(self, 1);
    if (a.requires_grad) a.accumulate_expr(self.grad.cwiseProduct(bx));
    if (b.requires_grad) b.accumulate(reduce_to(self.grad.cwiseProduct(a.value), kind));
  });
}

Tensor scale(const Tensor& a, Scalar s) {
  Matrix out = a.value() * s;
  return record(std::move(out), {a}, [s](Node& self) { parent(self, 0).accumulate_expr(self.grad * s); });
}

Tensor add_constant(const Tensor& a, const Matrix& c) {
  const Broadcast kind = broadcast_kind(a.value(), c, "add_constant");
  Matrix out = plus_broadcast(a.value(), c, kind);
  return record(std::move(out), {a}, [](Node& self) { parent(self, 0).accumulate_expr(self.grad); });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp().matrix();
  return record(std::move(out), {a}, [](Node& self) {
    parent(self, 0).accumulate_expr(self.grad.cwiseProduct(self.value));
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return record(std::move(out), {a}, [](Node& self) {
    parent(self, 0).accumulate_expr((self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return record(std::move(out), {a}, [](Node& self) {
    parent(self, 0).accumulate_expr(
        (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  });
}

Tensor gelu(const Tensor& a) {
  constexpr Scalar c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr Scalar k = 0.044715;
  const auto x = a.value().array();
  Eigen::ArrayXXd inner = c * (x + k * x.cube());
  Eigen::ArrayXXd th = inner.tanh();
  Matrix out = (0.5 * x * (1.0 + th)).matrix();
  Matrix dydx = (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th.square()) * c * (1.0 + 3.0 * k * x.square())).matrix();
  return record(std::move(out), {a}, [dydx = std::move(dydx)](Node& self) {
    parent(self, 0).accumulate_expr(self.grad.cwiseProduct(dydx));
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows(), c = a.cols();
  return record(std::move(out), {a}, [r, c](Node& self) {
    parent(self, 0).accumulate_expr(Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows of empty tensor");
  const Scalar inv = 1.0 / static_cast<Scalar>(a.rows());
  Matrix out = a.value().colwise().sum() * inv;
  const Index r = a.rows();
  return record(std::move(out), {a}, [r, inv](Node& self) {
    parent(self, 0).accumulate_expr(self.grad.replicate(r, 1) * inv);
  });
}

Tensor reduce_max(const Tensor& a, Axis axis) {
  const Matrix& v = a.value();
  if (v.size() == 0) throw ShapeError("reduce_max of empty tensor");
  std::vector<Index> arg;
  Matrix out;
  if (axis == Axis::Cols) {
    out.resize(v.rows(), 1);
    arg.resize(v.rows());
    for (Index i = 0; i < v.rows(); ++i) {
      Index j;
      out(i, 0) = v.row(i).maxCoeff(&j);
      arg[i] = j;
    }
  } else {
    out.resize(1, v.cols());
    arg.resize(v.cols());
    for (Index j = 0; j < v.cols(); ++j) {
      Index i;
      out(0, j) = v.col(j).maxCoeff(&i);
      arg[j] = i;
    }
  }
  return record(std::move(out), {a}, [axis, arg = std::move(arg)](Node& self) {
    Node& a = parent(self, 0);
    Matrix g = Matrix::Zero(a.value.rows(), a.value.cols());
    if (axis == Axis::Cols) {
      for (Index i = 0; i < g.rows(); ++i) g(i, arg[i]) = self.grad(i, 0);
    } else {
      for (Index j = 0; j < g.cols(); ++j) g(arg[j], j) = self.grad(0, j);
    }
    a.accumulate(g);
  });
}

Tensor masked_softmax(const Tensor& logits, const Matrix* mask) {
  const Matrix& x = logits.value();
  Matrix z = x;
  if (mask) {
    if (mask->cols() != x.cols() || (mask->rows() != x.rows() && mask->rows() != 1))
      throw ShapeError("masked_softmax: mask " + shape_string(*mask) + " not broadcastable to " + shape_string(x));
    if (mask->rows() == 1) {
      z.rowwise() += mask->row(0);
    } else {
      z += *mask;
    }
  }
  Matrix out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const Scalar m = z.row(i).maxCoeff();
    if (!std::isfinite(m)) throw std::domain_error("masked_softmax: row " + std::to_string(i) + " has no finite entry");
    // Eigen's vectorized exp can leave denormals for -inf inputs; masked
    // entries must be exactly zero.
    RowVector e = (z.row(i).array() - m).exp().matrix();
    for (Index j = 0; j < e.size(); ++j) {
      if (z(i, j) == -std::numeric_limits<Scalar>::infinity()) e(j) = 0.0;
    }
    out.row(i) = e / e.sum();
  }
  return record(std::move(out), {logits}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
    parent(self, 0).accumulate(g);
  });
}

Tensor log_softmax(const Tensor& logits) {
  const Matrix& x = logits.value();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    if (!std::isfinite(m)) throw std::domain_error("log_softmax: row " + std::to_string(i) + " has no finite entry");
    const Scalar lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return record(std::move(out), {logits}, [](Node& self) {
    Matrix p = self.value.array().exp().matrix();
    Matrix gsum = self.grad.rowwise().sum();
    parent(self, 0).accumulate(self.grad - p.cwiseProduct(gsum.replicate(1, p.cols())));
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  const Matrix& v = x.value();
  const Index n = v.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
    throw ShapeError("layer_norm: gain/bias must be [1x" + std::to_string(n) + "]");
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_std(v.rows());
  for (Index i = 0; i < v.rows(); ++i) {
    const Scalar mu = v.row(i).mean();
    const Scalar var = (v.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (v.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return record(std::move(out), {x, gamma, beta},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                  Node& x = parent(self, 0);
                  Node& gamma = parent(self, 1);
                  Node& beta = parent(self, 2);
                  const Matrix& g = self.grad;
                  if (gamma.requires_grad) gamma.accumulate_expr(g.cwiseProduct(xhat).colwise().sum());
                  if (beta.requires_grad) beta.accumulate_expr(g.colwise().sum());
                  if (x.requires_grad) {
                    const Scalar n = static_cast<Scalar>(xhat.cols());
                    Matrix dxhat = (g.array().rowwise() * gamma.value.row(0).array()).matrix();
                    Matrix dx(xhat.rows(), xhat.cols());
                    for (Index i = 0; i < xhat.rows(); ++i) {
                      const Scalar m1 = dxhat.row(i).sum() / n;
                      const Scalar m2 = dxhat.row(i).dot(xhat.row(i)) / n;
                      dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                    }
                    x.accumulate(dx);
                  }
                });
}

Tensor gather_rows(const Tensor& table, std::span<const int> rows) {
  const Matrix& t = table.value();
  Matrix out(static_cast<Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows())
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " outside " + shape_string(t));
    out.row(static_cast<Index>(i)) = t.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return record(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
    Node& t = parent(self, 0);
    if (t.grad.size() == 0) t.grad = Matrix::Zero(t.value.rows(), t.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) t.grad.row(idx[i]) += self.grad.row(static_cast<Index>(i));
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") outside " +
                     shape_string(a.value()));
  Matrix out = a.value().middleRows(start, count);
  return record(std::move(out), {a}, [start, count](Node& self) {
    Node& a = parent(self, 0);
    if (a.grad.size() == 0) a.grad = Matrix::Zero(a.value.rows(), a.value.cols());
    a.grad.middleRows(start, count) += self.grad;
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") outside " +
                     shape_string(a.value()));
  Matrix out = a.value().middleCols(start, count);
  return record(std::move(out), {a}, [start, count](Node& self) {
    Node& a = parent(self, 0);
    if (a.grad.size() == 0) a.grad = Matrix::Zero(a.value.rows(), a.value.cols());
    a.grad.middleCols(start, count) += self.grad;
  });
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("vstack of nothing");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("vstack: column mismatch " + shape_string(p.value()));
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record(std::move(out), inputs, [offsets = std::move(offsets)](Node& self) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      Node& p = parent(self, i);
      if (p.requires_grad) p.accumulate_expr(self.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Tensor hstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("hstack of nothing");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("hstack: row mismatch " + shape_string(p.value()));
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index c = 0;
  for (const auto& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record(std::move(out), inputs, [offsets = std::move(offsets)](Node& self) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      Node& p = parent(self, i);
      if (p.requires_grad) p.accumulate_expr(self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Tensor dropout(const Tensor& a, Scalar rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Scalar keep = 1.0 - rate;
  Matrix keep_mask(a.rows(), a.cols());
  // Uniform draw from the raw 64-bit output keeps the stream identical across
  // standard library implementations.
  for (Index i = 0; i < keep_mask.size(); ++i) {
    const Scalar u = static_cast<Scalar>((*rng)() >> 11) * 0x1.0p-53;
    keep_mask.data()[i] = u < keep ? 1.0 / keep : 0.0;
  }
  Matrix out = a.value().cwiseProduct(keep_mask);
  return record(std::move(out), {a}, [keep_mask = std::move(keep_mask)](Node& self) {
    parent(self, 0).accumulate_expr(self.grad.cwiseProduct(keep_mask));
  });
}

}  // namespace s2g
