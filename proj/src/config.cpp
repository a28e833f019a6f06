#include "chartdet/detector/config.hpp"

#include <json.hpp>

#include "chartdet/errors.hpp"

namespace chartdet::det {

using nlohmann::json;

namespace {

template <class V>
void read_if(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->get<V>();
  }
}

template <class V, std::size_t N>
void read_array_if(const json& j, const char* key, std::array<V, N>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != N) {
      throw SchemaError(std::string("config field '") + key + "' must be an array of " +
                        std::to_string(N));
    }
    for (std::size_t i = 0; i < N; ++i) out[i] = (*it)[i].get<V>();
  }
}

}  // namespace

std::string loss_config_to_json(const LossConfig& c) {
  json j = {{"gamma", c.gamma},
            {"lambda", c.lambda},
            {"smooth_l1_beta", c.smooth_l1_beta},
            {"stage_ious", c.stage_ious}};
  if (c.log_base != LossConfig::kNaturalBase) j["log_base"] = c.log_base;
  if (c.class_weights) j["class_weights"] = *c.class_weights;
  return j.dump(2);
}

LossConfig loss_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("loss config: ") + e.what());
  }
  LossConfig c;
  read_if(j, "gamma", c.gamma);
  read_if(j, "lambda", c.lambda);
  read_if(j, "log_base", c.log_base);
  read_if(j, "smooth_l1_beta", c.smooth_l1_beta);
  read_array_if(j, "stage_ious", c.stage_ious);
  if (auto it = j.find("class_weights"); it != j.end() && !it->is_null()) {
    c.class_weights = it->get<std::vector<double>>();
  }
  c.validate();
  return c;
}

namespace {

json fusion_to_json(const ContextFusionConfig& c) {
  return {{"use_vce", c.use_vce},       {"use_pce", c.use_pce},
          {"fc_hidden", c.fc_hidden},   {"visual_dim", c.visual_dim},
          {"pce_layers", c.pce_layers}, {"pce_heads", c.pce_heads},
          {"pce_ffn", c.pce_ffn},       {"pce_block_size", c.pce_block_size},
          {"se_reduction", c.se_reduction}};
}

ContextFusionConfig fusion_from_json(const json& j) {
  ContextFusionConfig c;
  read_if(j, "use_vce", c.use_vce);
  read_if(j, "use_pce", c.use_pce);
  read_if(j, "fc_hidden", c.fc_hidden);
  read_if(j, "visual_dim", c.visual_dim);
  read_if(j, "pce_layers", c.pce_layers);
  read_if(j, "pce_heads", c.pce_heads);
  read_if(j, "pce_ffn", c.pce_ffn);
  read_if(j, "pce_block_size", c.pce_block_size);
  read_if(j, "se_reduction", c.se_reduction);
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["backbone"] = {{"stem_channels", cfg.backbone.stem_channels},
                   {"stage_channels", cfg.backbone.stage_channels},
                   {"stage_blocks", cfg.backbone.stage_blocks},
                   {"gn_groups", cfg.backbone.gn_groups}};
  j["anchors"] = {{"scale", cfg.anchors.scale}, {"ratios", cfg.anchors.ratios}};
  j["rpn"] = {{"pos_iou", cfg.rpn.pos_iou},
              {"neg_iou", cfg.rpn.neg_iou},
              {"sample_count", cfg.rpn.sample_count},
              {"pos_fraction", cfg.rpn.pos_fraction},
              {"nms_iou", cfg.rpn.nms_iou},
              {"min_size", cfg.rpn.min_size},
              {"pre_nms_per_level_train", cfg.rpn.pre_nms_per_level_train},
              {"post_nms_train", cfg.rpn.post_nms_train},
              {"pre_nms_per_level_test", cfg.rpn.pre_nms_per_level_test},
              {"post_nms_test", cfg.rpn.post_nms_test},
              {"loss_beta", cfg.rpn.loss_beta}};
  json stages = json::array();
  for (const auto& s : cfg.stages) {
    stages.push_back({{"index", s.index},
                      {"iou_threshold", s.iou_threshold},
                      {"delta_weights", s.delta_weights}});
  }
  j["stages"] = std::move(stages);
  j["stage_loss_weights"] = cfg.stage_loss_weights;
  j["roi"] = {{"sample_count", cfg.roi.sample_count},
              {"pos_fraction", cfg.roi.pos_fraction},
              {"fusion", fusion_to_json(cfg.roi.fusion)}};
  j["test"] = {{"score_floor", cfg.test.score_floor},
               {"nms_iou", cfg.test.nms_iou},
               {"max_detections", cfg.test.max_detections},
               {"average_stage_scores", cfg.test.average_stage_scores}};
  j["num_classes"] = cfg.num_classes;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  if (auto it = j.find("backbone"); it != j.end()) {
    read_if(*it, "stem_channels", cfg.backbone.stem_channels);
    read_array_if(*it, "stage_channels", cfg.backbone.stage_channels);
    read_array_if(*it, "stage_blocks", cfg.backbone.stage_blocks);
    read_if(*it, "gn_groups", cfg.backbone.gn_groups);
  }
  if (auto it = j.find("anchors"); it != j.end()) {
    read_if(*it, "scale", cfg.anchors.scale);
    if (auto r = it->find("ratios"); r != it->end()) {
      cfg.anchors.ratios = r->get<std::vector<double>>();
    }
  }
  if (auto it = j.find("rpn"); it != j.end()) {
    read_if(*it, "pos_iou", cfg.rpn.pos_iou);
    read_if(*it, "neg_iou", cfg.rpn.neg_iou);
    read_if(*it, "sample_count", cfg.rpn.sample_count);
    read_if(*it, "pos_fraction", cfg.rpn.pos_fraction);
    read_if(*it, "nms_iou", cfg.rpn.nms_iou);
    read_if(*it, "min_size", cfg.rpn.min_size);
    read_if(*it, "pre_nms_per_level_train", cfg.rpn.pre_nms_per_level_train);
    read_if(*it, "post_nms_train", cfg.rpn.post_nms_train);
    read_if(*it, "pre_nms_per_level_test", cfg.rpn.pre_nms_per_level_test);
    read_if(*it, "post_nms_test", cfg.rpn.post_nms_test);
    read_if(*it, "loss_beta", cfg.rpn.loss_beta);
  }
  if (auto it = j.find("stages"); it != j.end()) {
    if (!it->is_array() || it->size() != 3) {
      throw SchemaError("model config: 'stages' must list exactly 3 stages");
    }
    for (std::size_t t = 0; t < 3; ++t) {
      auto& s = cfg.stages[t];
      read_if((*it)[t], "index", s.index);
      read_if((*it)[t], "iou_threshold", s.iou_threshold);
      read_array_if((*it)[t], "delta_weights", s.delta_weights);
    }
  }
  read_array_if(j, "stage_loss_weights", cfg.stage_loss_weights);
  if (auto it = j.find("roi"); it != j.end()) {
    read_if(*it, "sample_count", cfg.roi.sample_count);
    read_if(*it, "pos_fraction", cfg.roi.pos_fraction);
    if (auto f = it->find("fusion"); f != it->end()) {
      cfg.roi.fusion = fusion_from_json(*f);
    }
  }
  if (auto it = j.find("test"); it != j.end()) {
    read_if(*it, "score_floor", cfg.test.score_floor);
    read_if(*it, "nms_iou", cfg.test.nms_iou);
    read_if(*it, "max_detections", cfg.test.max_detections);
    read_if(*it, "average_stage_scores", cfg.test.average_stage_scores);
  }
  read_if(j, "num_classes", cfg.num_classes);
  cfg.validate();
  return cfg;
}

}  // namespace chartdet::det
