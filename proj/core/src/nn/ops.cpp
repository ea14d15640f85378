#include "vcf/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

namespace vcf::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

constexpr int kKernel = 3;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

/// col[(ci*9 + ky*3 + kx), oy*W + ox] = x[ci, oy + ky - 1, ox + kx - 1] (zero outside).
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t height, std::size_t width, T* col) {
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x + c * plane;
    for (long ky = 0; ky < kKernel; ++ky) {
      for (long kx = 0; kx < kKernel; ++kx) {
        T* dst = col + ((c * kKernel + ky) * kKernel + kx) * plane;
        for (long oy = 0; oy < h; ++oy) {
          const long iy = oy + ky - 1;
          T* row = dst + oy * w;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + w, T(0));
            continue;
          }
          const T* in = src + iy * w;
          for (long ox = 0; ox < w; ++ox) {
            const long ix = ox + kx - 1;
            row[ox] = (ix >= 0 && ix < w) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width, T* dx) {
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = dx + c * plane;
    for (long ky = 0; ky < kKernel; ++ky) {
      for (long kx = 0; kx < kKernel; ++kx) {
        const T* src = col + ((c * kKernel + ky) * kKernel + kx) * plane;
        for (long oy = 0; oy < h; ++oy) {
          const long iy = oy + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + oy * w;
          T* out = dst + iy * w;
          for (long ox = 0; ox < w; ++ox) {
            const long ix = ox + kx - 1;
            if (ix >= 0 && ix < w) out[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& weights) {
  require(x.rank() == 4, "conv2d input must be [N, C, H, W]");
  require(weights.rank() == 4 && weights.dim(2) == kKernel && weights.dim(3) == kKernel,
          "conv2d weights must be [Cout, Cin, 3, 3]");
  require(weights.dim(1) == x.dim(1), "conv2d channel mismatch");
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  check_conv_shapes(x, weights);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weights.dim(0);
  require(bias.size() == cout, "conv2d bias length mismatch");
  const std::size_t k = cin * kKernel * kKernel;
  const std::size_t plane = h * w;

  Tensor<T> y({n, cout, h, w});
  std::vector<T> col(k * plane);
  ConstMatMap<T> wm(weights.data(), static_cast<long>(cout), static_cast<long>(k));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bm(bias.data(), static_cast<long>(cout));
  for (std::size_t s = 0; s < n; ++s) {
    im2col(x.data() + s * cin * plane, cin, h, w, col.data());
    ConstMatMap<T> cm(col.data(), static_cast<long>(k), static_cast<long>(plane));
    MatMap<T> ym(y.data() + s * cout * plane, static_cast<long>(cout), static_cast<long>(plane));
    ym.noalias() = wm * cm;
    ym.colwise() += bm;
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy) {
  check_conv_shapes(x, weights);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weights.dim(0);
  require(dy.rank() == 4 && dy.dim(0) == n && dy.dim(1) == cout && dy.dim(2) == h && dy.dim(3) == w,
          "conv2d upstream gradient shape mismatch");
  const std::size_t k = cin * kKernel * kKernel;
  const std::size_t plane = h * w;

  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), Tensor<T>({cout})};
  std::vector<T> col(k * plane);
  std::vector<T> dcol(k * plane);
  ConstMatMap<T> wm(weights.data(), static_cast<long>(cout), static_cast<long>(k));
  MatMap<T> dwm(g.dweights.data(), static_cast<long>(cout), static_cast<long>(k));
  for (std::size_t s = 0; s < n; ++s) {
    im2col(x.data() + s * cin * plane, cin, h, w, col.data());
    ConstMatMap<T> cm(col.data(), static_cast<long>(k), static_cast<long>(plane));
    ConstMatMap<T> dym(dy.data() + s * cout * plane, static_cast<long>(cout), static_cast<long>(plane));
    dwm.noalias() += dym * cm.transpose();
    // Eigen's vectorised reductions start at the first aligned address, which
    // makes the summation order depend on the heap; sum in a fixed order instead.
    const T* dyp = dy.data() + s * cout * plane;
    for (std::size_t c = 0; c < cout; ++c) {
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += dyp[c * plane + i];
      g.dbias[c] += acc;
    }
    MatMap<T> dcm(dcol.data(), static_cast<long>(k), static_cast<long>(plane));
    dcm.noalias() = wm.transpose() * dym;
    col2im_add(dcol.data(), cin, h, w, g.dx.data() + s * cin * plane);
  }
  return g;
}

std::size_t pooled_extent(std::size_t in) { return (in + 1) / 2; }

template <typename T>
PoolResult<T> maxpool3(const Tensor<T>& x) {
  require(x.rank() == 4, "maxpool3 input must be [N, C, H, W]");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = pooled_extent(h), ow = pooled_extent(w);
  const long pad_y = static_cast<long>(std::max<std::size_t>((oh - 1) * 2 + kKernel, h) - h) / 2;
  const long pad_x = static_cast<long>(std::max<std::size_t>((ow - 1) * 2 + kKernel, w) - w) / 2;

  PoolResult<T> r{Tensor<T>({n, c, oh, ow}), std::vector<std::uint32_t>(n * c * oh * ow)};
  std::size_t out = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++out) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_index = base;
        bool any = false;
        for (long ky = 0; ky < kKernel; ++ky) {
          const long iy = static_cast<long>(oy) * 2 - pad_y + ky;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (long kx = 0; kx < kKernel; ++kx) {
            const long ix = static_cast<long>(ox) * 2 - pad_x + kx;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (!any || x[idx] > best) {
              best = x[idx];
              best_index = idx;
              any = true;
            }
          }
        }
        r.y[out] = best;
        r.argmax[out] = static_cast<std::uint32_t>(best_index);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3_backward(const Shape& x_shape, std::span<const std::uint32_t> argmax, const Tensor<T>& dy) {
  require(argmax.size() == dy.size(), "maxpool3 argmax/gradient size mismatch");
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require(x.size() == dy.size(), "relu gradient size mismatch");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(x.rank() == 2 && weights.rank() == 2 && weights.dim(1) == x.dim(1), "dense shape mismatch");
  require(bias.size() == weights.dim(0), "dense bias length mismatch");
  const auto n = static_cast<long>(x.dim(0));
  const auto f = static_cast<long>(x.dim(1));
  const auto o = static_cast<long>(weights.dim(0));
  Tensor<T> y({x.dim(0), weights.dim(0)});
  ConstMatMap<T> wm(weights.data(), o, f);
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<const Vec> bm(bias.data(), o);
  // One matrix-vector product per row: a sample's output must not depend on
  // how many other samples share its batch.
  for (long i = 0; i < n; ++i) {
    Eigen::Map<Vec> yi(y.data() + i * o, o);
    yi.noalias() = wm * Eigen::Map<const Vec>(x.data() + i * f, f);
    yi += bm;
  }
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dy) {
  require(dy.rank() == 2 && dy.dim(0) == x.dim(0) && dy.dim(1) == weights.dim(0),
          "dense upstream gradient shape mismatch");
  const auto n = static_cast<long>(x.dim(0));
  const auto f = static_cast<long>(x.dim(1));
  const auto o = static_cast<long>(weights.dim(0));
  DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), Tensor<T>({weights.dim(0)})};
  ConstMatMap<T> xm(x.data(), n, f);
  ConstMatMap<T> wm(weights.data(), o, f);
  ConstMatMap<T> dym(dy.data(), n, o);
  MatMap<T>(g.dweights.data(), o, f).noalias() = dym.transpose() * xm;
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < o; ++j) g.dbias[static_cast<std::size_t>(j)] += dym(i, j);
  MatMap<T>(g.dx.data(), n, f).noalias() = dym * wm;
  return g;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  DropoutResult<T> r{x, std::vector<T>(x.size(), T(1))};
  if (mode == Mode::Eval || rate == 0.0) return r;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.scale[i] = rng.uniform() < rate ? T(0) : keep_scale;
    r.y[i] = x[i] * r.scale[i];
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(std::span<const T> scale, const Tensor<T>& dy) {
  require(scale.size() == dy.size(), "dropout gradient size mismatch");
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * scale[i];
  return dx;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require(logits.rank() == 2, "softmax expects [N, K] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    T* out = p.data() + i * k;
    const T shift = *std::max_element(row, row + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(row[j] - shift);
      sum += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
  }
  return p;
}

template <typename T>
double cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
  require(probs.rank() == 2 && probs.dim(0) == labels.size(), "cross_entropy shape mismatch");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw std::out_of_range("cross_entropy label out of range");
    const double p = std::max(static_cast<double>(probs[i * k + static_cast<std::size_t>(labels[i])]), kProbFloor);
    loss -= std::log(p);
  }
  return loss / static_cast<double>(n);
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::span<const int> labels) {
  require(probs.rank() == 2 && probs.dim(0) == labels.size(), "cross_entropy shape mismatch");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> d = probs;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw std::out_of_range("cross_entropy label out of range");
    d[i * k + static_cast<std::size_t>(labels[i])] -= T(1);
    for (std::size_t j = 0; j < k; ++j) d[i * k + j] *= inv_n;
  }
  return d;
}

#define VCF_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template PoolResult<T> maxpool3(const Tensor<T>&);                                             \
  template Tensor<T> maxpool3_backward(const Shape&, std::span<const std::uint32_t>,            \
                                       const Tensor<T>&);                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template DropoutResult<T> dropout(const Tensor<T>&, double, Mode, Rng&);                       \
  template Tensor<T> dropout_backward(std::span<const T>, const Tensor<T>&);                     \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template double cross_entropy(const Tensor<T>&, std::span<const int>);                         \
  template Tensor<T> softmax_cross_entropy_backward(const Tensor<T>&, std::span<const int>);

VCF_INSTANTIATE_OPS(float)
VCF_INSTANTIATE_OPS(double)

#undef VCF_INSTANTIATE_OPS

}  // namespace vcf::nn
