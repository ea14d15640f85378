#include "vcf/nn/optim.hpp"

#include <stdexcept>

namespace vcf::nn {

template <typename T>
Sgd<T>::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

template <typename T>
void Sgd<T>::step(const std::vector<Param<T>*>& params) {
  if (velocity_.empty()) {
    for (const Param<T>* p : params) velocity_.emplace_back(p->value.shape());
  }
  if (velocity_.size() != params.size()) throw std::invalid_argument("parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) sgd_step(params[k]->value, params[k]->grad, velocity_[k], lr_, momentum_);
}

template <typename T>
void sgd_step(Tensor<T>& value, const Tensor<T>& grad, Tensor<T>& velocity, double lr, double momentum) {
  if (value.shape() != grad.shape() || value.shape() != velocity.shape())
    throw std::invalid_argument("sgd_step shape mismatch");
  const T m = static_cast<T>(momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < value.size(); ++i) {
    velocity[i] = m * velocity[i] + grad[i];
    value[i] -= rate * velocity[i];
  }
}

template class Sgd<float>;
template class Sgd<double>;
template void sgd_step(Tensor<float>&, const Tensor<float>&, Tensor<float>&, double, double);
template void sgd_step(Tensor<double>&, const Tensor<double>&, Tensor<double>&, double, double);

}  // namespace vcf::nn
