#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartdet/context_fusion.hpp"
#include "chartdet/losses.hpp"

namespace chartdet::det {

struct BackboneConfig {
  int stem_channels = 32;
  std::array<int, 4> stage_channels{48, 96, 160, 224};
  std::array<int, 4> stage_blocks{1, 1, 1, 1};
  int gn_groups = 8;
};

// One scale per level (anchor side = scale * stride); ratios are h/w, chosen
// for the extreme elongation of tick marks and axis titles.
struct AnchorConfig {
  double scale = 4.0;
  std::vector<double> ratios{0.2, 1.0, 5.0};
};

struct RpnConfig {
  double pos_iou = 0.7;
  double neg_iou = 0.3;
  int sample_count = 256;
  double pos_fraction = 0.5;
  double nms_iou = 0.7;
  double min_size = 1.0;
  int pre_nms_per_level_train = 1000;
  int post_nms_train = 1000;  // hard proposal cap per image
  int pre_nms_per_level_test = 600;
  int post_nms_test = 300;
  double loss_beta = 1.0 / 9.0;
};

struct StageConfig {
  int index = 1;              // 1-based cascade position
  double iou_threshold = 0.5;
  std::array<double, 4> delta_weights{10.0, 10.0, 5.0, 5.0};
};

struct RoiHeadConfig {
  int sample_count = 512;
  double pos_fraction = 0.25;
  ContextFusionConfig fusion;
};

struct TestConfig {
  double score_floor = 0.05;
  double nms_iou = 0.5;
  int max_detections = 300;
  bool average_stage_scores = false;
};

struct ModelConfig {
  BackboneConfig backbone;
  AnchorConfig anchors;
  RpnConfig rpn;
  std::array<StageConfig, 3> stages{
      StageConfig{1, 0.5, {10.0, 10.0, 5.0, 5.0}},
      StageConfig{2, 0.6, {20.0, 20.0, 10.0, 10.0}},
      StageConfig{3, 0.7, {30.0, 30.0, 15.0, 15.0}}};
  std::array<double, 3> stage_loss_weights{1.0, 0.5, 0.25};
  RoiHeadConfig roi;
  TestConfig test;
  int num_classes = 18;

  void validate() const {
    for (std::size_t i = 1; i < stages.size(); ++i) {
      if (!(stages[i].iou_threshold > stages[i - 1].iou_threshold)) {
        throw std::invalid_argument(
            "ModelConfig: stage IoU thresholds must strictly increase");
      }
    }
    if (rpn.post_nms_train > 1000 || rpn.post_nms_test > 1000) {
      throw std::invalid_argument("ModelConfig: proposal cap exceeds 1000");
    }
    if (roi.fusion.pce_block_size < rpn.post_nms_train ||
        roi.fusion.pce_block_size < rpn.post_nms_test) {
      throw std::invalid_argument(
          "ModelConfig: positional-encoder block smaller than proposal cap");
    }
  }
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);  // throws SchemaError

std::string loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const std::string& text);  // throws SchemaError

}  // namespace chartdet::det
