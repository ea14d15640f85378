#include "vcf/nn/layers.hpp"

#include <cmath>

namespace vcf::nn {

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels)
    : weight_(name + ".weight", {out_channels, in_channels, 3, 3}), bias_(name + ".bias", {out_channels}) {}

template <typename T>
LayerInfo Conv2d<T>::info() const {
  return {"conv2d",
          {{"in_channels", static_cast<double>(weight_.value.dim(1))},
           {"out_channels", static_cast<double>(weight_.value.dim(0))},
           {"kernel", 3},
           {"padding", 1}}};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return conv2d(x, weight_.value, bias_.value);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  auto g = conv2d_backward(input_, weight_.value, dy);
  for (std::size_t i = 0; i < g.dweights.size(); ++i) weight_.grad[i] += g.dweights[i];
  for (std::size_t i = 0; i < g.dbias.size(); ++i) bias_.grad[i] += g.dbias[i];
  return std::move(g.dx);
}

template <typename T>
Tensor<T> MaxPool3<T>::forward(const Tensor<T>& x, Mode) {
  input_shape_ = x.shape();
  auto r = maxpool3(x);
  argmax_ = std::move(r.argmax);
  return std::move(r.y);
}

template <typename T>
Tensor<T> MaxPool3<T>::backward(const Tensor<T>& dy) {
  return maxpool3_backward(input_shape_, argmax_, dy);
}

template <typename T>
void MaxPool3<T>::signature(std::vector<std::uint32_t>& out) const {
  out.insert(out.end(), argmax_.begin(), argmax_.end());
}

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return relu(x);
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& dy) {
  return relu_backward(input_, dy);
}

template <typename T>
void Relu<T>::signature(std::vector<std::uint32_t>& out) const {
  std::uint32_t word = 0;
  for (std::size_t i = 0; i < input_.size(); ++i) {
    if (input_[i] > T(0)) word |= 1u << (i % 32);
    if (i % 32 == 31) {
      out.push_back(word);
      word = 0;
    }
  }
  out.push_back(word);
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, Mode) {
  input_shape_ = x.shape();
  Tensor<T> y = x;
  y.reshape({x.dim(0), x.size() / x.dim(0)});
  return y;
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx = dy;
  dx.reshape(input_shape_);
  return dx;
}

template <typename T>
Dense<T>::Dense(const std::string& name, std::size_t in_features, std::size_t out_features)
    : weight_(name + ".weight", {out_features, in_features}), bias_(name + ".bias", {out_features}) {}

template <typename T>
LayerInfo Dense<T>::info() const {
  return {"dense",
          {{"in_features", static_cast<double>(weight_.value.dim(1))},
           {"out_features", static_cast<double>(weight_.value.dim(0))}}};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return dense(x, weight_.value, bias_.value);
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy) {
  auto g = dense_backward(input_, weight_.value, dy);
  for (std::size_t i = 0; i < g.dweights.size(); ++i) weight_.grad[i] += g.dweights[i];
  for (std::size_t i = 0; i < g.dbias.size(); ++i) bias_.grad[i] += g.dbias[i];
  return std::move(g.dx);
}

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::Train && frozen_ && scale_.size() == x.size()) {
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= scale_[i];
    return y;
  }
  auto r = dropout(x, rate_, mode, rng_);
  scale_ = std::move(r.scale);
  return std::move(r.y);
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  return dropout_backward<T>(scale_, dy);
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy) {
  Tensor<T> g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_)
    for (Param<T>* p : layer->params()) out.push_back(p);
  return out;
}

template <typename T>
void Sequential<T>::zero_grad() {
  for (Param<T>* p : params()) p->grad.fill(T(0));
}

template <typename T>
std::vector<std::uint32_t> Sequential<T>::signature() const {
  std::vector<std::uint32_t> out;
  for (const auto& layer : layers_) layer->signature(out);
  return out;
}

template <typename T>
void he_normal(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
}

#define VCF_INSTANTIATE_LAYERS(T)                                             \
  template class Conv2d<T>;                                                   \
  template class MaxPool3<T>;                                                 \
  template class Relu<T>;                                                     \
  template class Flatten<T>;                                                  \
  template class Dense<T>;                                                    \
  template class Dropout<T>;                                                  \
  template class Sequential<T>;                                               \
  template void he_normal(Tensor<T>&, std::size_t, Rng&);                     \
  template void glorot_uniform(Tensor<T>&, std::size_t, std::size_t, Rng&);

VCF_INSTANTIATE_LAYERS(float)
VCF_INSTANTIATE_LAYERS(double)

#undef VCF_INSTANTIATE_LAYERS

}  // namespace vcf::nn
