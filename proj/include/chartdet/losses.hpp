#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "chartdet/nn/layers.hpp"
#include "chartdet/nn/tensor.hpp"

namespace chartdet {

// Every scalar of the classification/localization objective.
struct LossConfig {
  double gamma = 2.0;              // focusing exponent
  double log_base = kNaturalBase;  // logarithm base, natural by default
  double lambda = 1.0;             // localization weight
  double smooth_l1_beta = 1.0;     // quadratic/linear breakpoint
  std::array<double, 3> stage_ious{0.5, 0.6, 0.7};
  std::optional<std::vector<double>> class_weights;  // 18 entries, classes 1..18

  static constexpr double kNaturalBase = 2.718281828459045235;

  void validate() const {
    if (gamma < 0.0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("LossConfig: lambda must be > 0");
    if (!(log_base > 1.0)) throw std::invalid_argument("LossConfig: log base must be > 1");
    if (class_weights && class_weights->size() != 18) {
      throw std::invalid_argument("LossConfig: class_weights must have 18 entries");
    }
    for (std::size_t i = 1; i < stage_ious.size(); ++i) {
      if (!(stage_ious[i] > stage_ious[i - 1])) {
        throw std::invalid_argument("LossConfig: stage IoU thresholds must strictly increase");
      }
    }
  }

  double log_divisor() const {
    return log_base == kNaturalBase ? 1.0 : std::log(log_base);
  }

  double weight_for(int label) const {
    if (label == 0 || !class_weights) return 1.0;
    return (*class_weights)[static_cast<std::size_t>(label - 1)];
  }
};

template <class T>
struct LossValue {
  T value = T(0);
  nn::Tensor<T> grad;  // w.r.t. the first argument
};

// Mean over RoIs of -(1-p_t)^gamma * log_b(p_t), p_t clamped at 1e-12.
// Labels index the probability columns; 0 is background. The gradient is
// taken w.r.t. the probability entries (only the true-class column is
// touched; the loss does not depend on the other columns).
template <class T>
LossValue<T> focal_loss(const nn::Tensor<T>& probs, const std::vector<int>& labels,
                        const LossConfig& cfg) {
  cfg.validate();
  const int n = probs.dim(0);
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("focal_loss: labels size mismatch");
  }
  LossValue<T> out;
  out.grad.resize(probs.shape());
  if (n == 0) return out;
  const T inv_ln_base = T(1) / static_cast<T>(cfg.log_divisor());
  const T gamma = static_cast<T>(cfg.gamma);
  T total = T(0);
  for (int i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    const T raw = probs.at2(i, label);
    const T p = std::max(raw, static_cast<T>(1e-12));
    const T w = static_cast<T>(cfg.weight_for(label)) / static_cast<T>(n);
    const T one_minus = T(1) - p;
    const T logp = std::log(p) * inv_ln_base;
    const T focus = gamma == T(0) ? T(1) : std::pow(one_minus, gamma);
    total += -w * focus * logp;
    // d/dp [-(1-p)^g * log_b p] = g*(1-p)^(g-1)*log_b p - (1-p)^g/(p*ln b)
    if (gamma > T(0) && one_minus <= T(0)) {
      continue;  // p_t = 1: zero loss, zero gradient
    }
    T dfocus = T(0);
    if (gamma != T(0)) {
      dfocus = gamma * std::pow(one_minus, gamma - T(1)) * logp;
    }
    out.grad.at2(i, label) = w * (dfocus - focus / p * inv_ln_base);
  }
  out.value = total;
  return out;
}

// Elementwise 0.5 x^2/beta for |x|<beta else |x|-0.5 beta; summed over the
// four delta coordinates and averaged over rows. Empty input yields 0.
template <class T>
LossValue<T> smooth_l1(const nn::Tensor<T>& pred, const nn::Tensor<T>& target,
                       double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be > 0");
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("smooth_l1: shape mismatch");
  }
  LossValue<T> out;
  out.grad.resize(pred.shape());
  const int m = pred.ndim() > 0 ? pred.dim(0) : 0;
  if (m == 0) return out;
  const T b = static_cast<T>(beta);
  const T inv_m = T(1) / static_cast<T>(m);
  T total = T(0);
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const T d = pred[i] - target[i];
    const T a = std::abs(d);
    if (a < b) {
      total += T(0.5) * d * d / b;
      out.grad[i] = d / b * inv_m;
    } else {
      total += a - T(0.5) * b;
      out.grad[i] = (d > T(0) ? T(1) : T(-1)) * inv_m;
    }
  }
  out.value = total * inv_m;
  return out;
}

template <class T>
struct CombinedLoss {
  T total = T(0);
  T cls = T(0);
  T loc = T(0);
  nn::Tensor<T> grad_logits;
  nn::Tensor<T> grad_reg;
};

// loss = L_cls over all rows + lambda * [label>=1] * L_loc on the regression
// slice of the target class. Regression output is class-specific:
// [N, num_classes*4], row i uses columns (label-1)*4 .. (label-1)*4+3.
template <class T>
CombinedLoss<T> combined_loss(const nn::Tensor<T>& cls_logits,
                              const nn::Tensor<T>& reg_out,
                              const std::vector<int>& labels,
                              const nn::Tensor<T>& target_deltas,
                              const LossConfig& cfg) {
  const int n = cls_logits.dim(0);
  CombinedLoss<T> out;
  out.grad_logits.resize(cls_logits.shape());
  out.grad_reg.resize(reg_out.shape());
  if (n == 0) return out;

  const nn::Tensor<T> probs = nn::softmax_rows(cls_logits);
  const LossValue<T> cls = focal_loss(probs, labels, cfg);
  out.cls = cls.value;
  out.grad_logits = nn::softmax_rows_backward(probs, cls.grad);

  std::vector<int> positives;
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] >= 1) positives.push_back(i);
  }
  const int p = static_cast<int>(positives.size());
  if (p > 0) {
    nn::Tensor<T> pred({p, 4}), tgt({p, 4});
    for (int r = 0; r < p; ++r) {
      const int i = positives[static_cast<std::size_t>(r)];
      const int cls_idx = labels[static_cast<std::size_t>(i)] - 1;
      for (int c = 0; c < 4; ++c) {
        pred.at2(r, c) = reg_out.at2(i, cls_idx * 4 + c);
        tgt.at2(r, c) = target_deltas.at2(i, c);
      }
    }
    const LossValue<T> loc = smooth_l1(pred, tgt, cfg.smooth_l1_beta);
    out.loc = loc.value;
    const T lambda = static_cast<T>(cfg.lambda);
    for (int r = 0; r < p; ++r) {
      const int i = positives[static_cast<std::size_t>(r)];
      const int cls_idx = labels[static_cast<std::size_t>(i)] - 1;
      for (int c = 0; c < 4; ++c) {
        out.grad_reg.at2(i, cls_idx * 4 + c) = lambda * loc.grad.at2(r, c);
      }
    }
  }
  out.total = out.cls + static_cast<T>(cfg.lambda) * out.loc;
  return out;
}

// Stable binary cross-entropy on logits; mean over entries.
// grad = (sigmoid(z) - t) / n.
template <class T>
LossValue<T> bce_with_logits(const nn::Tensor<T>& logits,
                             const std::vector<T>& targets) {
  const std::int64_t n = logits.numel();
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw std::invalid_argument("bce_with_logits: target size mismatch");
  }
  LossValue<T> out;
  out.grad.resize(logits.shape());
  if (n == 0) return out;
  T total = T(0);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const T z = logits[i];
    const T t = targets[static_cast<std::size_t>(i)];
    total += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    const T s = T(1) / (T(1) + std::exp(-z));
    out.grad[i] = (s - t) * inv_n;
  }
  out.value = total * inv_n;
  return out;
}

}  // namespace chartdet
