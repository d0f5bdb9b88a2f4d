#pragma once

// Hand-written forward/backward kernels for the U-net building blocks.
// Every function is a template over the scalar type so the same code runs
// in float for training and in double for gradient verification.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <algorithm>
#include <utility>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/tensor.hpp"

namespace vf::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
struct ParamGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
  Tensor<T> grad_b;
};

namespace detail {

inline void check_conv(const Shape& x, const Shape& w, const Shape& b, int pad) {
  require(w[1] == x[1], Errc::ShapeMismatch,
          "conv input channels " + std::to_string(x[1]) + " != kernel Cin " + std::to_string(w[1]));
  require(b == Shape{w[0], 1, 1, 1}, Errc::ShapeMismatch, "conv bias must be [Cout,1,1,1]");
  require(pad >= 0 && x[2] + 2 * pad >= w[2] && x[3] + 2 * pad >= w[3], Errc::ShapeMismatch,
          "conv kernel larger than padded input");
}

// Unroll each kernel window of sample `src` (C x H x W) into the rows of
// `col` (C*kh*kw x Ho*Wo).
template <class T>
void im2col(const T* src, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
            int pad, std::size_t Ho, std::size_t Wo, T* col) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t dy = 0; dy < kh; ++dy)
      for (std::size_t dx = 0; dx < kw; ++dx) {
        T* row = col + ((c * kh + dy) * kw + dx) * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
          const long sy = static_cast<long>(i + dy) - pad;
          T* dst = row + i * Wo;
          if (sy < 0 || sy >= static_cast<long>(H)) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* srow = src + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t j = 0; j < Wo; ++j) {
            const long sx = static_cast<long>(j + dx) - pad;
            dst[j] = (sx < 0 || sx >= static_cast<long>(W)) ? T(0) : srow[sx];
          }
        }
      }
}

template <class T>
void col2im(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
            int pad, std::size_t Ho, std::size_t Wo, T* dst) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t dy = 0; dy < kh; ++dy)
      for (std::size_t dx = 0; dx < kw; ++dx) {
        const T* row = col + ((c * kh + dy) * kw + dx) * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
          const long sy = static_cast<long>(i + dy) - pad;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          T* drow = dst + (c * H + static_cast<std::size_t>(sy)) * W;
          const T* srow = row + i * Wo;
          for (std::size_t j = 0; j < Wo; ++j) {
            const long sx = static_cast<long>(j + dx) - pad;
            if (sx >= 0 && sx < static_cast<long>(W)) drow[sx] += srow[j];
          }
        }
      }
}

inline bool is_pointwise(const Shape& w, int pad) { return w[2] == 1 && w[3] == 1 && pad == 0; }

}  // namespace detail

/// Direct six-loop convolution, stride 1, zero padding. Reference path.
template <class T>
Tensor<T> conv2d_forward_reference(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int pad) {
  detail::check_conv(x.shape(), w.shape(), b.shape(), pad);
  const std::size_t kh = w.h(), kw = w.w();
  const std::size_t Ho = x.h() + 2 * pad - kh + 1, Wo = x.w() + 2 * pad - kw + 1;
  Tensor<T> out(x.n(), w.n(), Ho, Wo);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t k = 0; k < w.n(); ++k)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          T acc = b[k];
          for (std::size_t c = 0; c < x.c(); ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const long sy = static_cast<long>(i + dy) - pad, sx = static_cast<long>(j + dx) - pad;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(x.h()) || sx >= static_cast<long>(x.w()))
                  continue;
                acc += x.at(n, c, sy, sx) * w.at(k, c, dy, dx);
              }
          out.at(n, k, i, j) = acc;
        }
  return out;
}

/// Convolution as window unrolling followed by one matrix product per
/// sample: out[k, p] = b[k] + sum_r W[k, r] col[r, p].
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int pad) {
  detail::check_conv(x.shape(), w.shape(), b.shape(), pad);
  const std::size_t C = x.c(), H = x.h(), W = x.w(), K = w.n(), kh = w.h(), kw = w.w();
  const std::size_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1, P = Ho * Wo;
  const std::size_t R = C * kh * kw;
  Tensor<T> out(x.n(), K, Ho, Wo);
  const ConstMatMap<T> wm(w.data(), K, R);
  const bool pointwise = detail::is_pointwise(w.shape(), pad);
  std::vector<T> col(pointwise ? 0 : R * P);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* colp = x.sample(n);
    if (!pointwise) {
      detail::im2col(x.sample(n), C, H, W, kh, kw, pad, Ho, Wo, col.data());
      colp = col.data();
    }
    MatMap<T> om(out.sample(n), K, P);
    om.noalias() = wm * ConstMatMap<T>(colp, R, P);
    for (std::size_t k = 0; k < K; ++k) om.row(k).array() += b[k];
  }
  return out;
}

/// Gradients of conv2d_forward given dL/d(out).
template <class T>
ParamGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out, int pad) {
  const std::size_t C = x.c(), H = x.h(), W = x.w(), K = w.n(), kh = w.h(), kw = w.w();
  require(w.c() == C, Errc::ShapeMismatch, "conv backward: kernel/input channel mismatch");
  const std::size_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1, P = Ho * Wo;
  require_shape(grad_out, Shape{x.n(), K, Ho, Wo}, "conv backward grad_out");
  const std::size_t R = C * kh * kw;

  ParamGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(K, 1, 1, 1)};
  const ConstMatMap<T> wm(w.data(), K, R);
  MatMap<T> gw(g.grad_w.data(), K, R);
  const bool pointwise = detail::is_pointwise(w.shape(), pad);
  std::vector<T> col(pointwise ? 0 : R * P), gcol(pointwise ? 0 : R * P);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const ConstMatMap<T> go(grad_out.sample(n), K, P);
    // Plain loop: Eigen's vectorized sum depends on pointer alignment, which
    // would make results vary between otherwise identical runs.
    for (std::size_t k = 0; k < K; ++k) {
      const T* row = grad_out.sample(n) + k * P;
      T acc = T(0);
      for (std::size_t i = 0; i < P; ++i) acc += row[i];
      g.grad_b[k] += acc;
    }
    const T* colp = x.sample(n);
    if (!pointwise) {
      detail::im2col(x.sample(n), C, H, W, kh, kw, pad, Ho, Wo, col.data());
      colp = col.data();
    }
    gw.noalias() += go * ConstMatMap<T>(colp, R, P).transpose();
    if (pointwise) {
      MatMap<T>(g.grad_x.sample(n), R, P).noalias() = wm.transpose() * go;
    } else {
      MatMap<T>(gcol.data(), R, P).noalias() = wm.transpose() * go;
      detail::col2im(gcol.data(), C, H, W, kh, kw, pad, Ho, Wo, g.grad_x.sample(n));
    }
  }
  return g;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

/// Passes the gradient where x > 0 and blocks it where x <= 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require_shape(grad_out, x.shape(), "relu backward");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <class T>
struct PoolResult {
  Tensor<T> out;
  /// Row-major position (0..3) of the maximum inside each 2x2 window.
  std::vector<std::uint8_t> argmax;
  Shape input_shape{};
};

/// 2x2 max pooling with stride 2. Ties resolve to the first element in
/// row-major window order.
template <class T>
PoolResult<T> maxpool_forward(const Tensor<T>& x) {
  require(x.h() % 2 == 0 && x.w() % 2 == 0, Errc::OddSpatialDims,
          "max pooling needs even spatial dims, got " + shape_str(x.shape()));
  PoolResult<T> r{Tensor<T>(x.n(), x.c(), x.h() / 2, x.w() / 2), {}, x.shape()};
  r.argmax.resize(r.out.size());
  const std::size_t Ho = x.h() / 2, Wo = x.w() / 2;
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const T* src = x.data() + nc * x.plane();
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j, ++o) {
        const T* p = src + 2 * i * x.w() + 2 * j;
        const T v[4] = {p[0], p[1], p[x.w()], p[x.w() + 1]};
        std::uint8_t best = 0;
        for (std::uint8_t k = 1; k < 4; ++k)
          if (v[k] > v[best]) best = k;
        r.out[o] = v[best];
        r.argmax[o] = best;
      }
  }
  return r;
}

template <class T>
Tensor<T> maxpool_backward(const std::vector<std::uint8_t>& argmax, const Tensor<T>& grad_out) {
  require(argmax.size() == grad_out.size(), Errc::ShapeMismatch, "maxpool backward: index/grad size mismatch");
  const std::size_t Ho = grad_out.h(), Wo = grad_out.w(), W = 2 * Wo;
  Tensor<T> g(grad_out.n(), grad_out.c(), 2 * Ho, W);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < grad_out.n() * grad_out.c(); ++nc) {
    T* dst = g.data() + nc * g.plane();
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j, ++o) {
        const std::uint8_t k = argmax[o];
        dst[(2 * i + k / 2) * W + 2 * j + k % 2] += grad_out[o];
      }
  }
  return g;
}

/// 2x2 stride-2 transposed convolution: weights [Cin, Cout, 2, 2],
/// out[n,k,2i+dy,2j+dx] = b[k] + sum_c x[n,c,i,j] w[c,k,dy,dx].
template <class T>
Tensor<T> upconv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require(w.n() == x.c() && w.h() == 2 && w.w() == 2, Errc::ShapeMismatch,
          "upconv weights must be [Cin,Cout,2,2] with Cin == input channels");
  require(b.shape() == Shape{w.c(), 1, 1, 1}, Errc::ShapeMismatch, "upconv bias must be [Cout,1,1,1]");
  const std::size_t Cin = x.c(), K = w.c(), H = x.h(), W = x.w(), P = H * W;
  Tensor<T> out(x.n(), K, 2 * H, 2 * W);
  const ConstMatMap<T> wm(w.data(), Cin, K * 4);
  RowMat<T> y(K * 4, P);
  for (std::size_t n = 0; n < x.n(); ++n) {
    y.noalias() = wm.transpose() * ConstMatMap<T>(x.sample(n), Cin, P);
    T* dst = out.sample(n);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t dy = q / 2, dx = q % 2;
        const T* src = y.data() + (k * 4 + q) * P;
        T* plane = dst + k * 4 * P;
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j)
            plane[(2 * i + dy) * 2 * W + 2 * j + dx] = src[i * W + j] + b[k];
      }
  }
  return out;
}

template <class T>
ParamGrads<T> upconv_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out) {
  const std::size_t Cin = x.c(), K = w.c(), H = x.h(), W = x.w(), P = H * W;
  require(w.n() == Cin, Errc::ShapeMismatch, "upconv backward: weight/input mismatch");
  require_shape(grad_out, Shape{x.n(), K, 2 * H, 2 * W}, "upconv backward grad_out");
  ParamGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(K, 1, 1, 1)};
  const ConstMatMap<T> wm(w.data(), Cin, K * 4);
  MatMap<T> gw(g.grad_w.data(), Cin, K * 4);
  RowMat<T> gy(K * 4, P);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* src = grad_out.sample(n);
    for (std::size_t k = 0; k < K; ++k) {
      const T* plane = src + k * 4 * P;
      T acc = 0;
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t dy = q / 2, dx = q % 2;
        T* dst = gy.data() + (k * 4 + q) * P;
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) {
            dst[i * W + j] = plane[(2 * i + dy) * 2 * W + 2 * j + dx];
          }
      }
      for (std::size_t i = 0; i < 4 * P; ++i) acc += plane[i];
      g.grad_b[k] += acc;
    }
    const ConstMatMap<T> xm(x.sample(n), Cin, P);
    gw.noalias() += xm * gy.transpose();
    MatMap<T>(g.grad_x.sample(n), Cin, P).noalias() = wm * gy;
  }
  return g;
}

/// Stacks channels [a; b].
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(), Errc::SpatialMismatch,
          "concat needs equal n/h/w: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(a.sample(n), a.sample_size(), out.sample(n));
    std::copy_n(b.sample(n), b.sample_size(), out.sample(n) + a.sample_size());
  }
  return out;
}

/// Inverse of concat_channels: the first `channels_a` channels go to the first tensor.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t channels_a) {
  require(channels_a <= x.c(), Errc::ShapeMismatch, "split point beyond channel count");
  std::pair<Tensor<T>, Tensor<T>> r{Tensor<T>(x.n(), channels_a, x.h(), x.w()),
                                    Tensor<T>(x.n(), x.c() - channels_a, x.h(), x.w())};
  for (std::size_t n = 0; n < x.n(); ++n) {
    std::copy_n(x.sample(n), r.first.sample_size(), r.first.sample(n));
    std::copy_n(x.sample(n) + r.first.sample_size(), r.second.sample_size(), r.second.sample(n));
  }
  return r;
}

template <class T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// Elementwise probabilities, kept strictly inside (0, 1) even where the
/// logistic saturates in T.
template <class T>
Tensor<T> sigmoid(const Tensor<T>& logits) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(sigmoid(logits[i]), lo, hi);
  return p;
}

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

/// Mean binary cross-entropy of sigmoid(logits) against labels, written as
/// max(z,0) - z y + log1p(exp(-|z|)) so large |z| cannot overflow.
/// grad = (sigmoid(z) - y) / element_count.
template <class T>
LossResult<T> sigmoid_bce_loss(const Tensor<T>& logits, const Tensor<T>& labels) {
  require_shape(labels, logits.shape(), "bce labels");
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  const double inv = 1.0 / static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], y = labels[i];
    sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    r.grad[i] = static_cast<T>((sigmoid(z) - y) * inv);
  }
  r.loss = sum * inv;
  return r;
}

}  // namespace vf::nn
