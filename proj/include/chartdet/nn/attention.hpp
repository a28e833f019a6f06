#pragma once

#include <stdexcept>

#include "chartdet/nn/layers.hpp"

namespace chartdet::nn {

// Post-norm transformer encoder layer over a set of vectors. No positional
// index embeddings are added, so the layer is permutation-equivariant over
// its rows — attention sees the input purely as a set.
template <class T>
class TransformerEncoderLayer {
public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(int d_model, int n_heads, int ff_dim, Rng& rng)
      : d_(d_model), heads_(n_heads), dh_(d_model / n_heads),
        q_(d_model, d_model, rng, xavier(d_model, d_model)),
        k_(d_model, d_model, rng, xavier(d_model, d_model)),
        v_(d_model, d_model, rng, xavier(d_model, d_model)),
        o_(d_model, d_model, rng, xavier(d_model, d_model)),
        ff1_(d_model, ff_dim, rng, xavier(d_model, ff_dim)),
        ff2_(ff_dim, d_model, rng, xavier(ff_dim, d_model)),
        ln1_(d_model), ln2_(d_model) {
    if (d_model % n_heads != 0) {
      throw std::invalid_argument("attention: heads must divide d_model");
    }
  }

  // x: [N, D] -> [N, D]
  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.dim(0);
    q_out_ = q_.forward(x);
    k_out_ = k_.forward(x);
    v_out_ = v_.forward(x);
    attn_.resize({heads_, n, n});
    Tensor<T> heads_out({n, d_});
    const T scale = T(1) / std::sqrt(static_cast<T>(dh_));
    for (int a = 0; a < heads_; ++a) {
      T* s = attn_.data() + static_cast<std::int64_t>(a) * n * n;
      gemm<T>(false, true, n, n, dh_, scale, q_out_.data() + a * dh_, d_,
              k_out_.data() + a * dh_, d_, T(0), s, n);
      // row-wise softmax in place
      for (int i = 0; i < n; ++i) {
        T* row = s + static_cast<std::int64_t>(i) * n;
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
      }
      gemm<T>(false, false, n, dh_, n, T(1), s, n, v_out_.data() + a * dh_, d_,
              T(0), heads_out.data() + a * dh_, d_);
    }
    Tensor<T> attn_proj = o_.forward(heads_out);
    attn_proj.add_scaled(x, T(1));  // residual
    x1_ = ln1_.forward(attn_proj);
    Tensor<T> ff = ff2_.forward(ff_relu_.forward(ff1_.forward(x1_)));
    ff.add_scaled(x1_, T(1));  // residual
    return ln2_.forward(ff);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = gy.dim(0);
    Tensor<T> g = ln2_.backward(gy);
    Tensor<T> gx1 = ff1_.backward(ff_relu_.backward(ff2_.backward(g)));
    gx1.add_scaled(g, T(1));  // feed-forward residual
    Tensor<T> gattn = ln1_.backward(gx1);
    Tensor<T> gheads = o_.backward(gattn);

    Tensor<T> gq({n, d_}), gk({n, d_}), gv({n, d_});
    for (int a = 0; a < heads_; ++a) {
      const T* s = attn_.data() + static_cast<std::int64_t>(a) * n * n;
      // dV = A^T * dO
      gemm<T>(true, false, n, dh_, n, T(1), s, n, gheads.data() + a * dh_, d_,
              T(0), gv.data() + a * dh_, d_);
      // dA = dO * V^T
      ga_.resize({n, n});
      gemm<T>(false, true, n, n, dh_, T(1), gheads.data() + a * dh_, d_,
              v_out_.data() + a * dh_, d_, T(0), ga_.data(), n);
      // softmax backward in place
      for (int i = 0; i < n; ++i) {
        const T* arow = s + static_cast<std::int64_t>(i) * n;
        T* grow = ga_.data() + static_cast<std::int64_t>(i) * n;
        T dot = T(0);
        for (int j = 0; j < n; ++j) dot += arow[j] * grow[j];
        for (int j = 0; j < n; ++j) grow[j] = arow[j] * (grow[j] - dot);
      }
      const T scale = T(1) / std::sqrt(static_cast<T>(dh_));
      // dQ = dS * K * scale; dK = dS^T * Q * scale
      gemm<T>(false, false, n, dh_, n, scale, ga_.data(), n,
              k_out_.data() + a * dh_, d_, T(0), gq.data() + a * dh_, d_);
      gemm<T>(true, false, n, dh_, n, scale, ga_.data(), n,
              q_out_.data() + a * dh_, d_, T(0), gk.data() + a * dh_, d_);
    }
    Tensor<T> gx = q_.backward(gq);
    gx.add_scaled(k_.backward(gk), T(1));
    gx.add_scaled(v_.backward(gv), T(1));
    gx.add_scaled(gattn, T(1));  // attention residual
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    q_.collect(prefix + ".q", out);
    k_.collect(prefix + ".k", out);
    v_.collect(prefix + ".v", out);
    o_.collect(prefix + ".o", out);
    ff1_.collect(prefix + ".ff1", out);
    ff2_.collect(prefix + ".ff2", out);
    ln1_.collect(prefix + ".ln1", out);
    ln2_.collect(prefix + ".ln2", out);
  }

private:
  static double xavier(int fan_in, int fan_out) {
    return std::sqrt(2.0 / (fan_in + fan_out));
  }

  int d_ = 0, heads_ = 0, dh_ = 0;
  Linear<T> q_, k_, v_, o_, ff1_, ff2_;
  LayerNorm<T> ln1_, ln2_;
  ReLU<T> ff_relu_;
  Tensor<T> q_out_, k_out_, v_out_, attn_, x1_, ga_;
};

}  // namespace chartdet::nn
