#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartdet/nn/blas.hpp"
#include "chartdet/nn/tensor.hpp"
#include "chartdet/rng.hpp"

namespace chartdet::nn {

// Layers cache what their backward pass needs during forward; the contract is
// one backward per forward, called in reverse order of the forward calls.

template <class T>
class Linear {
public:
  Linear() = default;
  Linear(int in_dim, int out_dim, Rng& rng, double init_std = -1.0)
      : in_(in_dim), out_(out_dim) {
    w_.init_shape({out_dim, in_dim});
    b_.init_shape({out_dim});
    const double std = init_std >= 0.0 ? init_std : std::sqrt(2.0 / in_dim);
    for (std::int64_t i = 0; i < w_.value.numel(); ++i) {
      w_.value[i] = static_cast<T>(rng.normal(0.0, std));
    }
  }

  // x: [N, in] -> [N, out]
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int n = x.dim(0);
    Tensor<T> y({n, out_});
    gemm<T>(false, true, n, out_, in_, T(1), x.data(), in_, w_.value.data(), in_,
            T(0), y.data(), out_);
    for (int i = 0; i < n; ++i) {
      T* row = y.data() + static_cast<std::size_t>(i) * out_;
      for (int j = 0; j < out_; ++j) row[j] += b_.value[j];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = gy.dim(0);
    gemm<T>(true, false, out_, in_, n, T(1), gy.data(), out_, x_.data(), in_,
            T(1), w_.grad.data(), in_);
    for (int i = 0; i < n; ++i) {
      const T* row = gy.data() + static_cast<std::size_t>(i) * out_;
      for (int j = 0; j < out_; ++j) b_.grad[j] += row[j];
    }
    Tensor<T> gx({n, in_});
    gemm<T>(false, false, n, in_, out_, T(1), gy.data(), out_, w_.value.data(),
            in_, T(0), gx.data(), in_);
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &w_);
    out.emplace_back(prefix + ".bias", &b_);
  }

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

private:
  int in_ = 0, out_ = 0;
  Param<T> w_, b_;
  Tensor<T> x_;
};

template <class T>
class Conv2d {
public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int kernel, int stride, int pad, Rng& rng,
         double init_std = -1.0)
      : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
    w_.init_shape({out_c, in_c * kernel * kernel});
    b_.init_shape({out_c});
    const double fan_in = static_cast<double>(in_c) * kernel * kernel;
    const double std = init_std >= 0.0 ? init_std : std::sqrt(2.0 / fan_in);
    for (std::int64_t i = 0; i < w_.value.numel(); ++i) {
      w_.value[i] = static_cast<T>(rng.normal(0.0, std));
    }
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  // Multiple forwards may precede their backwards (shared heads applied per
  // pyramid level); cached inputs form a LIFO stack. Inference skips caching.
  void set_training(bool on) { training_ = on; }

  // x: [N, in_c, H, W] -> [N, out_c, oh, ow]
  Tensor<T> forward(const Tensor<T>& x) {
    if (training_) x_stack_.push_back(x);
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = out_size(h), ow = out_size(w);
    Tensor<T> y({n, out_c_, oh, ow});
    const std::int64_t x_stride = static_cast<std::int64_t>(in_c_) * h * w;
    const std::int64_t y_stride = static_cast<std::int64_t>(out_c_) * oh * ow;
    const int ohw = oh * ow;
    const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
    if (!pointwise) col_.resize({in_c_ * k_ * k_, ohw});
    for (int i = 0; i < n; ++i) {
      const T* xi = x.data() + i * x_stride;
      T* yi = y.data() + i * y_stride;
      const T* col = pointwise ? xi : (im2col(xi, h, w, oh, ow), col_.data());
      gemm<T>(false, false, out_c_, ohw, in_c_ * k_ * k_, T(1), w_.value.data(),
              in_c_ * k_ * k_, col, ohw, T(0), yi, ohw);
      for (int c = 0; c < out_c_; ++c) {
        T* row = yi + static_cast<std::size_t>(c) * ohw;
        for (int p = 0; p < ohw; ++p) row[p] += b_.value[c];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T> x_ = std::move(x_stack_.back());
    x_stack_.pop_back();
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int oh = gy.dim(2), ow = gy.dim(3);
    const int ohw = oh * ow;
    const int ckk = in_c_ * k_ * k_;
    Tensor<T> gx({n, in_c_, h, w});
    const std::int64_t x_stride = static_cast<std::int64_t>(in_c_) * h * w;
    const std::int64_t y_stride = static_cast<std::int64_t>(out_c_) * oh * ow;
    const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
    if (!pointwise) {
      col_.resize({ckk, ohw});
      gcol_.resize({ckk, ohw});
    }
    for (int i = 0; i < n; ++i) {
      const T* xi = x_.data() + i * x_stride;
      const T* gyi = gy.data() + i * y_stride;
      T* gxi = gx.data() + i * x_stride;
      for (int c = 0; c < out_c_; ++c) {
        const T* row = gyi + static_cast<std::size_t>(c) * ohw;
        T acc = T(0);
        for (int p = 0; p < ohw; ++p) acc += row[p];
        b_.grad[c] += acc;
      }
      const T* col = pointwise ? xi : (im2col(xi, h, w, oh, ow), col_.data());
      gemm<T>(false, true, out_c_, ckk, ohw, T(1), gyi, ohw, col, ohw, T(1),
              w_.grad.data(), ckk);
      T* gcol = pointwise ? gxi : gcol_.data();
      gemm<T>(true, false, ckk, ohw, out_c_, T(1), w_.value.data(), ckk, gyi,
              ohw, T(0), gcol, ohw);
      if (!pointwise) col2im(gcol, h, w, oh, ow, gxi);
    }
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &w_);
    out.emplace_back(prefix + ".bias", &b_);
  }

  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

private:
  void im2col(const T* x, int h, int w, int oh, int ow) {
    T* col = col_.data();
    for (int c = 0; c < in_c_; ++c) {
      for (int ki = 0; ki < k_; ++ki) {
        for (int kj = 0; kj < k_; ++kj) {
          for (int i = 0; i < oh; ++i) {
            const int yy = i * stride_ - pad_ + ki;
            T* dst = col + ((static_cast<std::size_t>(c) * k_ + ki) * k_ + kj) *
                               (static_cast<std::size_t>(oh) * ow) +
                     static_cast<std::size_t>(i) * ow;
            if (yy < 0 || yy >= h) {
              for (int j = 0; j < ow; ++j) dst[j] = T(0);
              continue;
            }
            const T* src = x + (static_cast<std::size_t>(c) * h + yy) * w;
            for (int j = 0; j < ow; ++j) {
              const int xx = j * stride_ - pad_ + kj;
              dst[j] = (xx < 0 || xx >= w) ? T(0) : src[xx];
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, int h, int w, int oh, int ow, T* gx) {
    for (int c = 0; c < in_c_; ++c) {
      for (int ki = 0; ki < k_; ++ki) {
        for (int kj = 0; kj < k_; ++kj) {
          for (int i = 0; i < oh; ++i) {
            const int yy = i * stride_ - pad_ + ki;
            if (yy < 0 || yy >= h) continue;
            const T* src = col + ((static_cast<std::size_t>(c) * k_ + ki) * k_ + kj) *
                               (static_cast<std::size_t>(oh) * ow) +
                           static_cast<std::size_t>(i) * ow;
            T* dst = gx + (static_cast<std::size_t>(c) * h + yy) * w;
            for (int j = 0; j < ow; ++j) {
              const int xx = j * stride_ - pad_ + kj;
              if (xx >= 0 && xx < w) dst[xx] += src[j];
            }
          }
        }
      }
    }
  }

  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool training_ = true;
  Param<T> w_, b_;
  std::vector<Tensor<T>> x_stack_;
  Tensor<T> col_, gcol_;
};

template <class T>
class ReLU {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y = x;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      if (y[i] < T(0)) y[i] = T(0);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::int64_t i = 0; i < gx.numel(); ++i) {
      if (x_[i] <= T(0)) gx[i] = T(0);
    }
    return gx;
  }

private:
  Tensor<T> x_;
};

template <class T>
class Sigmoid {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (std::int64_t i = 0; i < y_.numel(); ++i) {
      y_[i] = T(1) / (T(1) + std::exp(-y_[i]));
    }
    return y_;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::int64_t i = 0; i < gx.numel(); ++i) {
      gx[i] *= y_[i] * (T(1) - y_[i]);
    }
    return gx;
  }

private:
  Tensor<T> y_;
};

template <class T>
class GroupNorm {
public:
  GroupNorm() = default;
  GroupNorm(int groups, int channels) : groups_(groups), channels_(channels) {
    if (channels % groups != 0) {
      throw std::invalid_argument("GroupNorm: channels must divide into groups");
    }
    gamma_.init_shape({channels});
    beta_.init_shape({channels});
    gamma_.value.fill(T(1));
  }

  // x: [N, C, H, W]
  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int m = c / groups_;
    const std::int64_t group_elems = static_cast<std::int64_t>(m) * h * w;
    xhat_ = x;
    inv_.resize({n, groups_});
    Tensor<T> y({n, c, h, w});
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups_; ++g) {
        T* xh = xhat_.data() + (static_cast<std::int64_t>(i) * c + g * m) *
                                   (static_cast<std::int64_t>(h) * w);
        T mean = T(0);
        for (std::int64_t e = 0; e < group_elems; ++e) mean += xh[e];
        mean /= static_cast<T>(group_elems);
        T var = T(0);
        for (std::int64_t e = 0; e < group_elems; ++e) {
          const T d = xh[e] - mean;
          var += d * d;
        }
        var /= static_cast<T>(group_elems);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(kEps));
        inv_.at2(i, g) = inv;
        T* yo = y.data() + (static_cast<std::int64_t>(i) * c + g * m) *
                               (static_cast<std::int64_t>(h) * w);
        for (int cc = 0; cc < m; ++cc) {
          const T ga = gamma_.value[g * m + cc];
          const T be = beta_.value[g * m + cc];
          T* xrow = xh + static_cast<std::int64_t>(cc) * h * w;
          T* yrow = yo + static_cast<std::int64_t>(cc) * h * w;
          for (std::int64_t e = 0; e < static_cast<std::int64_t>(h) * w; ++e) {
            xrow[e] = (xrow[e] - mean) * inv;  // store xhat in place
            yrow[e] = ga * xrow[e] + be;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
    const int m = c / groups_;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t group_elems = m * hw;
    Tensor<T> gx({n, c, h, w});
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups_; ++g) {
        const std::int64_t base = (static_cast<std::int64_t>(i) * c + g * m) * hw;
        const T inv = inv_.at2(i, g);
        T sum1 = T(0), sum2 = T(0);
        for (int cc = 0; cc < m; ++cc) {
          const T ga = gamma_.value[g * m + cc];
          const T* gyr = gy.data() + base + cc * hw;
          const T* xhr = xhat_.data() + base + cc * hw;
          T gsum = T(0), gxsum = T(0);
          for (std::int64_t e = 0; e < hw; ++e) {
            gsum += gyr[e];
            gxsum += gyr[e] * xhr[e];
          }
          gamma_.grad[g * m + cc] += gxsum;
          beta_.grad[g * m + cc] += gsum;
          sum1 += ga * gsum;
          sum2 += ga * gxsum;
        }
        const T scale = inv / static_cast<T>(group_elems);
        for (int cc = 0; cc < m; ++cc) {
          const T ga = gamma_.value[g * m + cc];
          const T* gyr = gy.data() + base + cc * hw;
          const T* xhr = xhat_.data() + base + cc * hw;
          T* gxr = gx.data() + base + cc * hw;
          for (std::int64_t e = 0; e < hw; ++e) {
            gxr[e] = scale * (static_cast<T>(group_elems) * ga * gyr[e] - sum1 -
                              xhr[e] * sum2);
          }
        }
      }
    }
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".gamma", &gamma_);
    out.emplace_back(prefix + ".beta", &beta_);
  }

private:
  static constexpr double kEps = 1e-5;
  int groups_ = 1, channels_ = 0;
  Param<T> gamma_, beta_;
  Tensor<T> xhat_, inv_;
};

template <class T>
class LayerNorm {
public:
  LayerNorm() = default;
  explicit LayerNorm(int dim) : dim_(dim) {
    gamma_.init_shape({dim});
    beta_.init_shape({dim});
    gamma_.value.fill(T(1));
  }

  // x: [N, D], normalized per row.
  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.dim(0);
    xhat_ = x;
    inv_.resize({n});
    Tensor<T> y({n, dim_});
    for (int i = 0; i < n; ++i) {
      T* xh = xhat_.data() + static_cast<std::int64_t>(i) * dim_;
      T mean = T(0);
      for (int j = 0; j < dim_; ++j) mean += xh[j];
      mean /= static_cast<T>(dim_);
      T var = T(0);
      for (int j = 0; j < dim_; ++j) {
        const T d = xh[j] - mean;
        var += d * d;
      }
      var /= static_cast<T>(dim_);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(kEps));
      inv_[i] = inv;
      T* yr = y.data() + static_cast<std::int64_t>(i) * dim_;
      for (int j = 0; j < dim_; ++j) {
        xh[j] = (xh[j] - mean) * inv;
        yr[j] = gamma_.value[j] * xh[j] + beta_.value[j];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = gy.dim(0);
    Tensor<T> gx({n, dim_});
    for (int i = 0; i < n; ++i) {
      const T* gyr = gy.data() + static_cast<std::int64_t>(i) * dim_;
      const T* xhr = xhat_.data() + static_cast<std::int64_t>(i) * dim_;
      T* gxr = gx.data() + static_cast<std::int64_t>(i) * dim_;
      T sum1 = T(0), sum2 = T(0);
      for (int j = 0; j < dim_; ++j) {
        const T dxh = gyr[j] * gamma_.value[j];
        sum1 += dxh;
        sum2 += dxh * xhr[j];
        gamma_.grad[j] += gyr[j] * xhr[j];
        beta_.grad[j] += gyr[j];
      }
      const T scale = inv_[i] / static_cast<T>(dim_);
      for (int j = 0; j < dim_; ++j) {
        const T dxh = gyr[j] * gamma_.value[j];
        gxr[j] = scale * (static_cast<T>(dim_) * dxh - sum1 - xhr[j] * sum2);
      }
    }
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".gamma", &gamma_);
    out.emplace_back(prefix + ".beta", &beta_);
  }

private:
  static constexpr double kEps = 1e-5;
  int dim_ = 0;
  Param<T> gamma_, beta_;
  Tensor<T> xhat_, inv_;
};

// Adaptive average pooling with the conventional floor/ceil window split,
// which also upsamples gracefully when the output is larger than the input.
template <class T>
class AdaptiveAvgPool2d {
public:
  AdaptiveAvgPool2d(int out_h, int out_w) : oh_(out_h), ow_(out_w) {}

  Tensor<T> forward(const Tensor<T>& x) {
    in_h_ = x.dim(2);
    in_w_ = x.dim(3);
    const int n = x.dim(0), c = x.dim(1);
    Tensor<T> y({n, c, oh_, ow_});
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        for (int a = 0; a < oh_; ++a) {
          const int hs = a * in_h_ / oh_;
          const int he = ((a + 1) * in_h_ + oh_ - 1) / oh_;
          for (int b = 0; b < ow_; ++b) {
            const int ws = b * in_w_ / ow_;
            const int we = ((b + 1) * in_w_ + ow_ - 1) / ow_;
            T acc = T(0);
            for (int yy = hs; yy < he; ++yy) {
              for (int xx = ws; xx < we; ++xx) acc += x.at4(i, ch, yy, xx);
            }
            y.at4(i, ch, a, b) = acc / static_cast<T>((he - hs) * (we - ws));
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = gy.dim(0), c = gy.dim(1);
    Tensor<T> gx({n, c, in_h_, in_w_});
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        for (int a = 0; a < oh_; ++a) {
          const int hs = a * in_h_ / oh_;
          const int he = ((a + 1) * in_h_ + oh_ - 1) / oh_;
          for (int b = 0; b < ow_; ++b) {
            const int ws = b * in_w_ / ow_;
            const int we = ((b + 1) * in_w_ + ow_ - 1) / ow_;
            const T g = gy.at4(i, ch, a, b) / static_cast<T>((he - hs) * (we - ws));
            for (int yy = hs; yy < he; ++yy) {
              for (int xx = ws; xx < we; ++xx) gx.at4(i, ch, yy, xx) += g;
            }
          }
        }
      }
    }
    return gx;
  }

private:
  int oh_, ow_;
  int in_h_ = 0, in_w_ = 0;
};

// Row-wise stable softmax over the last dimension of [N, K].
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const int n = x.dim(0), k = x.dim(1);
  Tensor<T> y({n, k});
  for (int i = 0; i < n; ++i) {
    const T* xr = x.data() + static_cast<std::int64_t>(i) * k;
    T* yr = y.data() + static_cast<std::int64_t>(i) * k;
    T mx = xr[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < k; ++j) yr[j] /= sum;
  }
  return y;
}

template <class T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& gy) {
  const int n = y.dim(0), k = y.dim(1);
  Tensor<T> gx({n, k});
  for (int i = 0; i < n; ++i) {
    const T* yr = y.data() + static_cast<std::int64_t>(i) * k;
    const T* gr = gy.data() + static_cast<std::int64_t>(i) * k;
    T* xr = gx.data() + static_cast<std::int64_t>(i) * k;
    T dot = T(0);
    for (int j = 0; j < k; ++j) dot += yr[j] * gr[j];
    for (int j = 0; j < k; ++j) xr[j] = yr[j] * (gr[j] - dot);
  }
  return gx;
}

// Nearest-neighbor 2x upsample cropped to (th, tw); th <= 2H, tw <= 2W.
template <class T>
Tensor<T> upsample2x_crop(const Tensor<T>& x, int th, int tw) {
  const int n = x.dim(0), c = x.dim(1);
  Tensor<T> y({n, c, th, tw});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      for (int a = 0; a < th; ++a) {
        for (int b = 0; b < tw; ++b) {
          y.at4(i, ch, a, b) = x.at4(i, ch, a / 2, b / 2);
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> upsample2x_crop_backward(const Tensor<T>& gy, int h, int w) {
  const int n = gy.dim(0), c = gy.dim(1), th = gy.dim(2), tw = gy.dim(3);
  Tensor<T> gx({n, c, h, w});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      for (int a = 0; a < th; ++a) {
        for (int b = 0; b < tw; ++b) {
          gx.at4(i, ch, a / 2, b / 2) += gy.at4(i, ch, a, b);
        }
      }
    }
  }
  return gx;
}

// Stride-2 subsample (max pool with kernel 1), used to derive the coarsest
// pyramid level from the one above it.
template <class T>
Tensor<T> subsample2(const Tensor<T>& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<T> y({n, c, oh, ow});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int a = 0; a < oh; ++a)
        for (int b = 0; b < ow; ++b) y.at4(i, ch, a, b) = x.at4(i, ch, 2 * a, 2 * b);
  return y;
}

template <class T>
Tensor<T> subsample2_backward(const Tensor<T>& gy, int h, int w) {
  const int n = gy.dim(0), c = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  Tensor<T> gx({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int a = 0; a < oh; ++a)
        for (int b = 0; b < ow; ++b) gx.at4(i, ch, 2 * a, 2 * b) = gy.at4(i, ch, a, b);
  return gx;
}

}  // namespace chartdet::nn
