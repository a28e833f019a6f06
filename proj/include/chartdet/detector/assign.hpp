#pragma once

#include <cstdint>
#include <vector>

#include "chartdet/geometry.hpp"
#include "chartdet/rng.hpp"
#include "chartdet/taxonomy.hpp"

namespace chartdet::det {

// Per-proposal training targets for one cascade stage.
// label: 0 background, 1..18 foreground class; deltas valid only where
// label >= 1 and are pre-scaled by the stage delta weights.
struct StageTargets {
  std::vector<int> labels;
  std::vector<BoxDelta> deltas;
  std::vector<int> matched_gt;  // -1 for background
};

// Positive iff the max-IoU ground truth reaches `iou_threshold`; positives
// take that ground truth's class and its encoded, weight-scaled delta.
StageTargets assign_targets(const std::vector<Box>& proposals,
                            const std::vector<LabeledBox>& ground_truth,
                            double iou_threshold,
                            const std::array<double, 4>& delta_weights);

// Random subset of proposals for the stage head: up to `count` rois with at
// most `pos_fraction` positives, negatives filling the remainder.
std::vector<int> sample_rois(const std::vector<int>& labels, int count,
                             double pos_fraction, Rng& rng);

// Greedy non-maximum suppression. Returns kept indices ordered by
// (score desc, index asc); equal scores are broken by index.
std::vector<int> nms(const std::vector<Box>& boxes,
                     const std::vector<double>& scores, double iou_threshold);

}  // namespace chartdet::det
