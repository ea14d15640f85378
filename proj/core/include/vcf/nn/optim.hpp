#pragma once

#include <vector>

#include "vcf/nn/layers.hpp"

namespace vcf::nn {

/// SGD with classical momentum:
///   velocity = momentum * velocity + grad
///   value   -= lr * velocity
template <typename T>
class Sgd {
 public:
  /// Throws std::invalid_argument unless lr > 0 and momentum in [0, 1).
  Sgd(double lr, double momentum);

  /// Parameters must be passed in the same order on every call.
  void step(const std::vector<Param<T>*>& params);

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor<T>> velocity_;
};

/// Functional form on bare tensors, same update rule.
template <typename T>
void sgd_step(Tensor<T>& value, const Tensor<T>& grad, Tensor<T>& velocity, double lr, double momentum);

}  // namespace vcf::nn
