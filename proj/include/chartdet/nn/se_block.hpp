#pragma once

#include "chartdet/nn/layers.hpp"

namespace chartdet::nn {

// Squeeze-and-excitation channel gate: global average pool -> bottleneck MLP
// -> sigmoid -> per-channel rescale of the input map.
template <class T>
class SEBlock {
public:
  SEBlock() = default;
  SEBlock(int channels, int reduction, Rng& rng)
      : channels_(channels),
        fc1_(channels, std::max(1, channels / reduction), rng),
        fc2_(std::max(1, channels / reduction), channels, rng) {}

  // x: [N, C, H, W] -> same shape.
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor<T> squeezed({n, c});
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T* row = x.data() + (static_cast<std::int64_t>(i) * c + ch) * hw;
        T acc = T(0);
        for (std::int64_t e = 0; e < hw; ++e) acc += row[e];
        squeezed.at2(i, ch) = acc / static_cast<T>(hw);
      }
    }
    gates_ = gate_sigmoid_.forward(fc2_.forward(relu_.forward(fc1_.forward(squeezed))));
    Tensor<T> y({n, c, h, w});
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T g = gates_.at2(i, ch);
        const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
        for (std::int64_t e = 0; e < hw; ++e) y[base + e] = x[base + e] * g;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = x_.dim(0), c = x_.dim(1), h = x_.dim(2), w = x_.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor<T> ggate({n, c});
    Tensor<T> gx = gy;
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
        const T g = gates_.at2(i, ch);
        T acc = T(0);
        for (std::int64_t e = 0; e < hw; ++e) {
          acc += gy[base + e] * x_[base + e];
          gx[base + e] = gy[base + e] * g;
        }
        ggate.at2(i, ch) = acc;
      }
    }
    const Tensor<T> gsq = fc1_.backward(
        relu_.backward(fc2_.backward(gate_sigmoid_.backward(ggate))));
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T g = gsq.at2(i, ch) / static_cast<T>(hw);
        const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
        for (std::int64_t e = 0; e < hw; ++e) gx[base + e] += g;
      }
    }
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    fc1_.collect(prefix + ".fc1", out);
    fc2_.collect(prefix + ".fc2", out);
  }

  // Test hook: force gate output to a constant by zeroing the MLP and setting
  // fc2 bias to the sigmoid preimage of the desired gate value.
  Linear<T>& fc1() { return fc1_; }
  Linear<T>& fc2() { return fc2_; }

private:
  int channels_ = 0;
  Linear<T> fc1_, fc2_;
  ReLU<T> relu_;
  Sigmoid<T> gate_sigmoid_;
  Tensor<T> x_, gates_;
};

}  // namespace chartdet::nn
