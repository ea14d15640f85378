#include "vcf/nn/lstm.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace vcf::nn {

namespace {

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
Lstm<T>::Lstm(const std::string& name, std::size_t input_size, std::size_t hidden_size)
    : input_size_(input_size),
      hidden_size_(hidden_size),
      w_input_(name + ".w_input", {4 * hidden_size, input_size}),
      w_hidden_(name + ".w_hidden", {4 * hidden_size, hidden_size}),
      bias_(name + ".bias", {4 * hidden_size}) {}

template <typename T>
std::vector<T> Lstm<T>::forward(std::span<const T> inputs) {
  const auto d = static_cast<long>(input_size_);
  const auto h = static_cast<long>(hidden_size_);
  if (inputs.empty() || inputs.size() % input_size_ != 0)
    throw std::invalid_argument("lstm needs a non-empty sequence of whole input steps");
  steps_ = inputs.size() / input_size_;
  inputs_.assign(inputs.begin(), inputs.end());
  gates_.assign(steps_ * 4 * hidden_size_, T(0));
  cells_.assign(steps_ * hidden_size_, T(0));
  hiddens_.assign(steps_ * hidden_size_, T(0));

  Eigen::Map<const RowMatrix<T>> wx(w_input_.value.data(), 4 * h, d);
  Eigen::Map<const RowMatrix<T>> wh(w_hidden_.value.data(), 4 * h, h);
  Eigen::Map<const Vec<T>> b(bias_.value.data(), 4 * h);
  Vec<T> z(4 * h);
  Vec<T> h_prev = Vec<T>::Zero(h);
  Vec<T> c_prev = Vec<T>::Zero(h);
  for (std::size_t t = 0; t < steps_; ++t) {
    Eigen::Map<const Vec<T>> x(inputs_.data() + t * input_size_, d);
    z.noalias() = wx * x;
    z.noalias() += wh * h_prev;
    z += b;
    T* gate = gates_.data() + t * 4 * hidden_size_;
    T* cell = cells_.data() + t * hidden_size_;
    T* hid = hiddens_.data() + t * hidden_size_;
    for (long j = 0; j < h; ++j) {
      const T ig = sigmoid(z[j]);
      const T fg = sigmoid(z[h + j]);
      const T gg = std::tanh(z[2 * h + j]);
      const T og = sigmoid(z[3 * h + j]);
      gate[j] = ig;
      gate[h + j] = fg;
      gate[2 * h + j] = gg;
      gate[3 * h + j] = og;
      cell[j] = fg * c_prev[j] + ig * gg;
      hid[j] = og * std::tanh(cell[j]);
    }
    h_prev = Eigen::Map<const Vec<T>>(hid, h);
    c_prev = Eigen::Map<const Vec<T>>(cell, h);
  }
  return {hiddens_.end() - static_cast<long>(hidden_size_), hiddens_.end()};
}

template <typename T>
std::vector<T> Lstm<T>::backward(std::span<const T> dh_last) {
  const auto d = static_cast<long>(input_size_);
  const auto h = static_cast<long>(hidden_size_);
  if (steps_ == 0) throw std::logic_error("lstm backward called before forward");
  if (dh_last.size() != hidden_size_) throw std::invalid_argument("lstm upstream gradient size mismatch");

  Eigen::Map<const RowMatrix<T>> wx(w_input_.value.data(), 4 * h, d);
  Eigen::Map<const RowMatrix<T>> wh(w_hidden_.value.data(), 4 * h, h);
  Eigen::Map<RowMatrix<T>> dwx(w_input_.grad.data(), 4 * h, d);
  Eigen::Map<RowMatrix<T>> dwh(w_hidden_.grad.data(), 4 * h, h);
  Eigen::Map<Vec<T>> db(bias_.grad.data(), 4 * h);

  std::vector<T> dinputs(inputs_.size(), T(0));
  Vec<T> dh = Eigen::Map<const Vec<T>>(dh_last.data(), h);
  Vec<T> dc = Vec<T>::Zero(h);
  Vec<T> dz(4 * h);
  const Vec<T> zeros = Vec<T>::Zero(h);
  for (std::size_t t = steps_; t-- > 0;) {
    const T* gate = gates_.data() + t * 4 * hidden_size_;
    const T* cell = cells_.data() + t * hidden_size_;
    const T* c_prev = t > 0 ? cells_.data() + (t - 1) * hidden_size_ : zeros.data();
    for (long j = 0; j < h; ++j) {
      const T ig = gate[j], fg = gate[h + j], gg = gate[2 * h + j], og = gate[3 * h + j];
      const T tc = std::tanh(cell[j]);
      const T dcell = dc[j] + dh[j] * og * (T(1) - tc * tc);
      dz[j] = dcell * gg * ig * (T(1) - ig);
      dz[h + j] = dcell * c_prev[j] * fg * (T(1) - fg);
      dz[2 * h + j] = dcell * ig * (T(1) - gg * gg);
      dz[3 * h + j] = dh[j] * tc * og * (T(1) - og);
      dc[j] = dcell * fg;
    }
    Eigen::Map<const Vec<T>> x(inputs_.data() + t * input_size_, d);
    dwx.noalias() += dz * x.transpose();
    db += dz;
    Eigen::Map<Vec<T>>(dinputs.data() + t * input_size_, d).noalias() = wx.transpose() * dz;
    if (t > 0) {
      Eigen::Map<const Vec<T>> h_prev(hiddens_.data() + (t - 1) * hidden_size_, h);
      dwh.noalias() += dz * h_prev.transpose();
    }
    dh.noalias() = wh.transpose() * dz;
  }
  return dinputs;
}

template class Lstm<float>;
template class Lstm<double>;

}  // namespace vcf::nn
