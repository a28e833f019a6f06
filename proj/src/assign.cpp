#include "chartdet/detector/assign.hpp"

#include <algorithm>
#include <numeric>

namespace chartdet::det {

StageTargets assign_targets(const std::vector<Box>& proposals,
                            const std::vector<LabeledBox>& ground_truth,
                            double iou_threshold,
                            const std::array<double, 4>& delta_weights) {
  StageTargets t;
  const std::size_t n = proposals.size();
  t.labels.assign(n, 0);
  t.deltas.assign(n, BoxDelta{});
  t.matched_gt.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double v = iou(proposals[i], ground_truth[g].box);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= iou_threshold) {
      const auto& gt = ground_truth[static_cast<std::size_t>(best_gt)];
      t.labels[i] = static_cast<int>(gt.category);
      t.matched_gt[i] = best_gt;
      BoxDelta d = encode_delta(proposals[i], gt.box);
      d.tx *= delta_weights[0];
      d.ty *= delta_weights[1];
      d.tw *= delta_weights[2];
      d.th *= delta_weights[3];
      t.deltas[i] = d;
    }
  }
  return t;
}

std::vector<int> sample_rois(const std::vector<int>& labels, int count,
                             double pos_fraction, Rng& rng) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] >= 1 ? pos : neg).push_back(static_cast<int>(i));
  }
  const int max_pos = static_cast<int>(count * pos_fraction);
  if (static_cast<int>(pos.size()) > max_pos) {
    rng.shuffle(pos);
    pos.resize(static_cast<std::size_t>(max_pos));
  }
  const int want_neg = count - static_cast<int>(pos.size());
  if (static_cast<int>(neg.size()) > want_neg) {
    rng.shuffle(neg);
    neg.resize(static_cast<std::size_t>(want_neg));
  }
  std::vector<int> out = pos;
  out.insert(out.end(), neg.begin(), neg.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> nms(const std::vector<Box>& boxes,
                     const std::vector<double>& scores, double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const std::size_t ia = static_cast<std::size_t>(a);
    const std::size_t ib = static_cast<std::size_t>(b);
    if (scores[ia] != scores[ib]) return scores[ia] > scores[ib];
    return a < b;
  });
  std::vector<int> keep;
  std::vector<char> suppressed(boxes.size(), 0);
  for (int idx : order) {
    if (suppressed[static_cast<std::size_t>(idx)]) continue;
    keep.push_back(idx);
    for (int other : order) {
      if (other == idx || suppressed[static_cast<std::size_t>(other)]) continue;
      if (iou(boxes[static_cast<std::size_t>(idx)],
              boxes[static_cast<std::size_t>(other)]) > iou_threshold) {
        suppressed[static_cast<std::size_t>(other)] = 1;
      }
    }
  }
  return keep;
}

}  // namespace chartdet::det
