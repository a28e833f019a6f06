#pragma once

#include <algorithm>
#include <numeric>

#include "chartdet/detector/anchors.hpp"
#include "chartdet/detector/assign.hpp"
#include "chartdet/detector/backbone.hpp"
#include "chartdet/losses.hpp"

namespace chartdet::det {

// Class-agnostic proposal with its provenance for deterministic ordering.
struct Proposal {
  Box box;
  double score = 0.0;
  int level = 0;
  int anchor_index = 0;  // flat index within the level
};

template <class T>
struct RpnOutput {
  std::vector<nn::Tensor<T>> logits;  // per level [1, A, h, w]
  std::vector<nn::Tensor<T>> deltas;  // per level [1, 4A, h, w]
};

template <class T>
struct RpnLoss {
  T cls = T(0);
  T reg = T(0);
  std::vector<nn::Tensor<T>> g_logits;  // aligned with RpnOutput
  std::vector<nn::Tensor<T>> g_deltas;
};

// Shared 3x3 conv + twin 1x1 heads applied to every pyramid level.
template <class T>
class RpnHead {
public:
  RpnHead() = default;
  RpnHead(int anchors_per_cell, Rng& rng)
      : anchors_per_cell_(anchors_per_cell),
        conv_(256, 256, 3, 1, 1, rng, 0.01),
        cls_(256, anchors_per_cell, 1, 1, 0, rng, 0.01),
        reg_(256, anchors_per_cell * 4, 1, 1, 0, rng, 0.01) {}

  RpnOutput<T> forward(const Pyramid<T>& pyr) {
    RpnOutput<T> out;
    for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
      const nn::Tensor<T> h = relu_[l].forward(conv_.forward(pyr.levels[l]));
      out.logits.push_back(cls_.forward(h));
      out.deltas.push_back(reg_.forward(h));
    }
    return out;
  }

  // Adds this head's pyramid-level gradients into g_pyramid.
  void backward(const RpnLoss<T>& loss, std::array<nn::Tensor<T>, 5>& g_pyramid) {
    for (int l = 4; l >= 0; --l) {
      nn::Tensor<T> gh = cls_.backward(loss.g_logits[static_cast<std::size_t>(l)]);
      gh.add_scaled(reg_.backward(loss.g_deltas[static_cast<std::size_t>(l)]), T(1));
      g_pyramid[static_cast<std::size_t>(l)].add_scaled(
          conv_.backward(relu_[static_cast<std::size_t>(l)].backward(gh)), T(1));
    }
  }

  void set_training(bool on) {
    conv_.set_training(on);
    cls_.set_training(on);
    reg_.set_training(on);
  }

  void collect(const std::string& prefix, nn::NamedParams<T>& out) {
    conv_.collect(prefix + ".conv", out);
    cls_.collect(prefix + ".cls", out);
    reg_.collect(prefix + ".reg", out);
  }

  int anchors_per_cell() const { return anchors_per_cell_; }

private:
  int anchors_per_cell_ = 0;
  nn::Conv2d<T> conv_, cls_, reg_;
  std::array<nn::ReLU<T>, 5> relu_;  // per level: caches must coexist
};

// Decode + clip + per-level NMS + global score cap. Equal scores fall back to
// (level, anchor index) order, so a constant score map yields anchor order.
template <class T>
std::vector<Proposal> generate_proposals(const RpnOutput<T>& out,
                                         const Pyramid<T>& pyr,
                                         const AnchorConfig& anchor_cfg,
                                         const RpnConfig& cfg, bool training) {
  const int pre_nms = training ? cfg.pre_nms_per_level_train : cfg.pre_nms_per_level_test;
  const int post_nms = training ? cfg.post_nms_train : cfg.post_nms_test;
  std::vector<Proposal> all;
  for (int l = 0; l < 5; ++l) {
    const auto& logits = out.logits[static_cast<std::size_t>(l)];
    const auto& deltas = out.deltas[static_cast<std::size_t>(l)];
    const int h = logits.dim(2), w = logits.dim(3);
    const int a_count = logits.dim(1);
    const std::vector<Box> anchors = make_level_anchors(
        h, w, kPyramidStrides[static_cast<std::size_t>(l)], anchor_cfg);
    const int total = a_count * h * w;
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    const T* logit_data = logits.data();
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return logit_data[x] > logit_data[y];  // ties keep anchor order
    });
    if (static_cast<int>(order.size()) > pre_nms) order.resize(static_cast<std::size_t>(pre_nms));

    std::vector<Box> cand_boxes;
    std::vector<double> cand_scores;
    std::vector<int> cand_idx;
    for (int idx : order) {
      const int a = idx / (h * w);
      const int cell = idx % (h * w);
      const int i = cell / w, j = cell % w;
      BoxDelta d;
      d.tx = static_cast<double>(deltas.at4(0, a * 4 + 0, i, j));
      d.ty = static_cast<double>(deltas.at4(0, a * 4 + 1, i, j));
      d.tw = static_cast<double>(deltas.at4(0, a * 4 + 2, i, j));
      d.th = static_cast<double>(deltas.at4(0, a * 4 + 3, i, j));
      Box b = clip_box(decode_delta(anchors[static_cast<std::size_t>(idx)], d),
                       pyr.image_w, pyr.image_h);
      if (b.width() < cfg.min_size || b.height() < cfg.min_size) continue;
      cand_boxes.push_back(b);
      const double z = static_cast<double>(logit_data[idx]);
      cand_scores.push_back(1.0 / (1.0 + std::exp(-z)));
      cand_idx.push_back(idx);
    }
    for (int keep : nms(cand_boxes, cand_scores, cfg.nms_iou)) {
      Proposal p;
      p.box = cand_boxes[static_cast<std::size_t>(keep)];
      p.score = cand_scores[static_cast<std::size_t>(keep)];
      p.level = l;
      p.anchor_index = cand_idx[static_cast<std::size_t>(keep)];
      all.push_back(p);
    }
  }
  std::sort(all.begin(), all.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.level != b.level) return a.level < b.level;
    return a.anchor_index < b.anchor_index;
  });
  if (static_cast<int>(all.size()) > post_nms) all.resize(static_cast<std::size_t>(post_nms));
  return all;
}

// Binary objectness + smooth-L1 on positive anchors. Positives: IoU >= pos_iou
// or per-ground-truth argmax; negatives below neg_iou; the rest ignored.
template <class T>
RpnLoss<T> rpn_loss(const RpnOutput<T>& out, const AnchorConfig& anchor_cfg,
                    const RpnConfig& cfg, const std::vector<LabeledBox>& gts,
                    Rng& rng) {
  RpnLoss<T> loss;
  struct AnchorRef {
    int level, idx;
    Box box;
  };
  std::vector<AnchorRef> anchors;
  for (int l = 0; l < 5; ++l) {
    const auto& logits = out.logits[static_cast<std::size_t>(l)];
    const int h = logits.dim(2), w = logits.dim(3);
    const std::vector<Box> level_anchors = make_level_anchors(
        h, w, kPyramidStrides[static_cast<std::size_t>(l)], anchor_cfg);
    for (std::size_t i = 0; i < level_anchors.size(); ++i) {
      anchors.push_back({l, static_cast<int>(i), level_anchors[i]});
    }
    loss.g_logits.emplace_back(logits.shape());
    loss.g_deltas.emplace_back(out.deltas[static_cast<std::size_t>(l)].shape());
  }

  const std::size_t n = anchors.size();
  std::vector<int> label(n, -1);  // 1 pos, 0 neg, -1 ignore
  std::vector<int> matched(n, -1);
  std::vector<double> best_gt_iou(gts.size(), 0.0);
  std::vector<double> max_iou(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(anchors[i].box, gts[g].box);
      if (v > max_iou[i]) {
        max_iou[i] = v;
        matched[i] = static_cast<int>(g);
      }
      if (v > best_gt_iou[g]) best_gt_iou[g] = v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (max_iou[i] < cfg.neg_iou) label[i] = 0;
    if (max_iou[i] >= cfg.pos_iou) label[i] = 1;
  }
  // every ground truth keeps its best-overlapping anchors
  for (std::size_t i = 0; i < n; ++i) {
    const int g = matched[i];
    if (g >= 0 && best_gt_iou[static_cast<std::size_t>(g)] > 0.0 &&
        max_iou[i] >= best_gt_iou[static_cast<std::size_t>(g)] - 1e-9) {
      label[i] = 1;
    }
  }

  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == 1) pos.push_back(static_cast<int>(i));
    if (label[i] == 0) neg.push_back(static_cast<int>(i));
  }
  const int max_pos = static_cast<int>(cfg.sample_count * cfg.pos_fraction);
  if (static_cast<int>(pos.size()) > max_pos) {
    rng.shuffle(pos);
    pos.resize(static_cast<std::size_t>(max_pos));
  }
  const int want_neg = cfg.sample_count - static_cast<int>(pos.size());
  if (static_cast<int>(neg.size()) > want_neg) {
    rng.shuffle(neg);
    neg.resize(static_cast<std::size_t>(want_neg));
  }

  const auto logit_at = [&](const AnchorRef& a) {
    return out.logits[static_cast<std::size_t>(a.level)][a.idx];
  };

  // classification: BCE over the sampled anchors
  std::vector<int> sampled = pos;
  sampled.insert(sampled.end(), neg.begin(), neg.end());
  nn::Tensor<T> z({static_cast<int>(sampled.size())});
  std::vector<T> targets(sampled.size());
  for (std::size_t s = 0; s < sampled.size(); ++s) {
    const auto& a = anchors[static_cast<std::size_t>(sampled[s])];
    z[static_cast<std::int64_t>(s)] = logit_at(a);
    targets[s] = label[static_cast<std::size_t>(sampled[s])] == 1 ? T(1) : T(0);
  }
  const LossValue<T> cls = bce_with_logits(z, targets);
  loss.cls = cls.value;
  for (std::size_t s = 0; s < sampled.size(); ++s) {
    const auto& a = anchors[static_cast<std::size_t>(sampled[s])];
    loss.g_logits[static_cast<std::size_t>(a.level)][a.idx] +=
        cls.grad[static_cast<std::int64_t>(s)];
  }

  // regression: smooth-L1 on positives
  if (!pos.empty()) {
    const int p = static_cast<int>(pos.size());
    nn::Tensor<T> pred({p, 4}), tgt({p, 4});
    for (int r = 0; r < p; ++r) {
      const auto& a = anchors[static_cast<std::size_t>(pos[static_cast<std::size_t>(r)])];
      const auto& deltas = out.deltas[static_cast<std::size_t>(a.level)];
      const int hw = deltas.dim(2) * deltas.dim(3);
      const int ach = a.idx / hw;
      const int cell = a.idx % hw;
      for (int c = 0; c < 4; ++c) {
        pred.at2(r, c) = deltas[(static_cast<std::int64_t>(ach) * 4 + c) * hw + cell];
      }
      const BoxDelta d = encode_delta(
          a.box, gts[static_cast<std::size_t>(
                         matched[static_cast<std::size_t>(pos[static_cast<std::size_t>(r)])])]
                     .box);
      tgt.at2(r, 0) = static_cast<T>(d.tx);
      tgt.at2(r, 1) = static_cast<T>(d.ty);
      tgt.at2(r, 2) = static_cast<T>(d.tw);
      tgt.at2(r, 3) = static_cast<T>(d.th);
    }
    const LossValue<T> reg = smooth_l1(pred, tgt, cfg.loss_beta);
    loss.reg = reg.value;
    for (int r = 0; r < p; ++r) {
      const auto& a = anchors[static_cast<std::size_t>(pos[static_cast<std::size_t>(r)])];
      auto& gd = loss.g_deltas[static_cast<std::size_t>(a.level)];
      const int hw = gd.dim(2) * gd.dim(3);
      const int ach = a.idx / hw;
      const int cell = a.idx % hw;
      for (int c = 0; c < 4; ++c) {
        gd[(static_cast<std::int64_t>(ach) * 4 + c) * hw + cell] += reg.grad.at2(r, c);
      }
    }
  }
  return loss;
}

}  // namespace chartdet::det
