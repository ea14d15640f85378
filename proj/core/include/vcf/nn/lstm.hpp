#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vcf/nn/layers.hpp"
#include "vcf/nn/tensor.hpp"

namespace vcf::nn {

/// Single-layer LSTM. Gate blocks inside the stacked matrices are ordered
/// input, forget, candidate, output:
///   z = Wx x_t + Wh h_{t-1} + b
///   i = sigmoid(z_i), f = sigmoid(z_f), g = tanh(z_g), o = sigmoid(z_o)
///   c_t = f * c_{t-1} + i * g,  h_t = o * tanh(c_t)
/// with h_0 = c_0 = 0.
template <typename T>
class Lstm {
 public:
  Lstm(const std::string& name, std::size_t input_size, std::size_t hidden_size);

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }

  /// `inputs` holds T steps of input_size values each. Returns h_T.
  /// Throws std::invalid_argument for an empty sequence.
  std::vector<T> forward(std::span<const T> inputs);

  /// Backpropagation through time over the whole last sequence, given dL/dh_T.
  /// Accumulates parameter gradients; returns dL/dinputs.
  std::vector<T> backward(std::span<const T> dh_last);

  std::vector<Param<T>*> params() { return {&w_input_, &w_hidden_, &bias_}; }
  Param<T>& w_input() { return w_input_; }
  Param<T>& w_hidden() { return w_hidden_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t input_size_;
  std::size_t hidden_size_;
  Param<T> w_input_;   ///< [4H, D]
  Param<T> w_hidden_;  ///< [4H, H]
  Param<T> bias_;      ///< [4H]

  // per-step caches of the last forward pass, each steps x (H or 4H)
  std::vector<T> inputs_;
  std::vector<T> gates_;  ///< activated i, f, g, o
  std::vector<T> cells_;
  std::vector<T> hiddens_;
  std::size_t steps_ = 0;
};

}  // namespace vcf::nn
