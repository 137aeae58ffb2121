#include "s2g/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace s2g {

Tensor ParameterStore::add(const std::string& name, Matrix init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t = Tensor::parameter(std::move(init));
  t.zero_grad();
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParameterStore::normal(const std::string& name, Index rows, Index cols, Rng& rng, double stddev) {
  return add(name, normal_matrix(rows, cols, stddev, rng));
}

Tensor ParameterStore::zeros(const std::string& name, Index rows, Index cols) {
  return add(name, Matrix::Zero(rows, cols));
}

Tensor ParameterStore::ones(const std::string& name, Index rows, Index cols) {
  return add(name, Matrix::Ones(rows, cols));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad())
      throw std::logic_error("optimizer step: parameter " + std::to_string(i) + " has no gradient");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Matrix& g = p.grad();
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseAbs2();
    p.mutable_value().array() -=
        options_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.epsilon);
    p.zero_grad();
  }
}

}  // namespace s2g
