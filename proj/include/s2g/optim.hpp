#pragma once

#include "s2g/random.hpp"
#include "s2g/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace s2g {

/// Named, ordered collection of trainable tensors. Names are stable keys
/// for checkpoints.
class ParameterStore {
 public:
  /// Registers a new parameter; its gradient starts at zero.
  Tensor add(const std::string& name, Matrix init);
  Tensor normal(const std::string& name, Index rows, Index cols, Rng& rng, double stddev = 0.02);
  Tensor zeros(const std::string& name, Index rows, Index cols);
  Tensor ones(const std::string& name, Index rows, Index cols);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. `step` consumes the accumulated gradients and
/// zeroes them.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  /// Throws std::logic_error if a parameter carries no gradient buffer.
  void step();
  long steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions options_;
  long t_ = 0;
};

}  // namespace s2g
