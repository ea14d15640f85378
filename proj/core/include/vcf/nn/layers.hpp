#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vcf/nn/ops.hpp"
#include "vcf/nn/tensor.hpp"
#include "vcf/rng.hpp"

namespace vcf::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Architecture entry written to checkpoints.
struct LayerInfo {
  std::string type;
  std::vector<std::pair<std::string, double>> attributes;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerInfo info() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  /// Adds parameter gradients into Param::grad and returns the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  /// Appends the discrete choices of the last forward pass (relu signs, pool
  /// winners) so gradient checks can skip probes that cross a kink.
  virtual void signature(std::vector<std::uint32_t>&) const {}
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels);
  LayerInfo info() const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class MaxPool3 final : public Layer<T> {
 public:
  LayerInfo info() const override { return {"maxpool3", {{"kernel", 3}, {"stride", 2}}}; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void signature(std::vector<std::uint32_t>& out) const override;

 private:
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerInfo info() const override { return {"relu", {}}; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void signature(std::vector<std::uint32_t>& out) const override;

 private:
  Tensor<T> input_;
};

/// [N, C, H, W] -> [N, C*H*W]
template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerInfo info() const override { return {"flatten", {}}; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Shape input_shape_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const std::string& name, std::size_t in_features, std::size_t out_features);
  LayerInfo info() const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t seed);
  LayerInfo info() const override { return {"dropout", {{"rate", rate_}}}; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }
  /// While frozen, train-mode forward passes reuse the previous mask.
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  double rate() const { return rate_; }

 private:
  double rate_;
  Rng rng_;
  bool frozen_ = false;
  std::vector<T> scale_;
};

template <typename T>
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);
  std::vector<Param<T>*> params();
  void zero_grad();
  std::vector<std::uint32_t> signature() const;
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// He (Kaiming) normal initialisation: N(0, sqrt(2 / fan_in)).
template <typename T>
void he_normal(Tensor<T>& w, std::size_t fan_in, Rng& rng);

/// Glorot uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace vcf::nn
