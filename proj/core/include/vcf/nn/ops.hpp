#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vcf/nn/tensor.hpp"
#include "vcf/rng.hpp"

namespace vcf::nn {

enum class Mode { Train, Eval };

// 3x3 convolution, stride 1, zero padding 1.
// x: [N, Cin, H, W], weights: [Cout, Cin, 3, 3], bias: [Cout] -> [N, Cout, H, W]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dweights;
  Tensor<T> dbias;
};
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy);

// 3x3 max pooling, stride 2, "same" padding with -inf: out = ceil(in / 2).
// Padding is split as floor(total / 2) before and the rest after.
template <typename T>
struct PoolResult {
  Tensor<T> y;
  std::vector<std::uint32_t> argmax;  ///< flat index into x for every output
};
template <typename T>
PoolResult<T> maxpool3(const Tensor<T>& x);
template <typename T>
Tensor<T> maxpool3_backward(const Shape& x_shape, std::span<const std::uint32_t> argmax, const Tensor<T>& dy);
std::size_t pooled_extent(std::size_t in);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

// x: [N, F], weights: [O, F], bias: [O] -> [N, O]
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);
template <typename T>
struct DenseGrads {
  Tensor<T> dx;
  Tensor<T> dweights;
  Tensor<T> dbias;
};
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy);

/// Inverted dropout. In eval mode the mask is all ones; in train mode each
/// unit survives with probability 1 - rate and is scaled by 1 / (1 - rate).
template <typename T>
struct DropoutResult {
  Tensor<T> y;
  std::vector<T> scale;  ///< per element: 0 or 1 / (1 - rate)
};
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng);
template <typename T>
Tensor<T> dropout_backward(std::span<const T> scale, const Tensor<T>& dy);

/// Row-wise softmax over [N, K] logits, shifted by the row max.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

inline constexpr double kProbFloor = 1e-12;

/// Mean over rows of -log(max(probs[label], 1e-12)).
/// Throws std::out_of_range for a label outside [0, K).
template <typename T>
double cross_entropy(const Tensor<T>& probs, std::span<const int> labels);

/// Gradient of the mean cross-entropy with respect to the logits: (p - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::span<const int> labels);

}  // namespace vcf::nn
