#pragma once

#include <optional>

#include "chartdet/detector/assign.hpp"
#include "chartdet/detector/backbone.hpp"
#include "chartdet/detector/roi_align.hpp"
#include "chartdet/detector/rpn.hpp"
#include "chartdet/errors.hpp"

namespace chartdet::det {

struct Detection {
  Box box;
  ChartCategory category = ChartCategory::kOthers;
  double score = 0.0;
};

struct StepLosses {
  double total = 0.0;
  double rpn_cls = 0.0;
  double rpn_reg = 0.0;
  std::array<double, 3> stage_cls{0.0, 0.0, 0.0};
  std::array<double, 3> stage_loc{0.0, 0.0, 0.0};
};

// Cascade detector: backbone+FPN, RPN, and three RoI heads at increasing IoU
// thresholds, each fed through its own context-fusion module. Processes one
// image per call; training accumulates parameter gradients in place.
template <class T>
class DetectorModel {
public:
  DetectorModel() = default;

  DetectorModel(const ModelConfig& cfg, const LossConfig& loss_cfg, Rng& rng)
      : cfg_(cfg), loss_cfg_(loss_cfg), initialized_(true) {
    cfg_.validate();
    loss_cfg_.validate();
    backbone_ = BackboneFpn<T>(cfg.backbone, rng);
    rpn_ = RpnHead<T>(static_cast<int>(cfg.anchors.ratios.size()), rng);
    for (int t = 0; t < 3; ++t) {
      auto& st = stages_[static_cast<std::size_t>(t)];
      st.fusion = ContextFusionStage<T>(cfg.roi.fusion, rng);
      const int in_dim = cfg.roi.fusion.fused_dim();
      st.cls_head = nn::Linear<T>(in_dim, cfg.num_classes + 1, rng, 0.01);
      st.reg_head = nn::Linear<T>(in_dim, cfg.num_classes * 4, rng, 0.001);
    }
  }

  bool initialized() const { return initialized_; }
  const ModelConfig& config() const { return cfg_; }
  const LossConfig& loss_config() const { return loss_cfg_; }

  Pyramid<T> extract_pyramid(const nn::Tensor<T>& image) {
    require_initialized();
    return backbone_.forward(image);
  }

  // Full forward/backward for one image; gradients are scaled by grad_scale
  // (1/batch) and accumulate into the parameters' grad buffers.
  StepLosses train_image(const nn::Tensor<T>& image,
                         const std::vector<LabeledBox>& gts, Rng& rng,
                         double grad_scale) {
    require_initialized();
    set_training(true);
    StepLosses losses;

    Pyramid<T> pyr = backbone_.forward(image);
    RpnOutput<T> rpn_out = rpn_.forward(pyr);
    RpnLoss<T> rloss = rpn_loss(rpn_out, cfg_.anchors, cfg_.rpn, gts, rng);
    losses.rpn_cls = static_cast<double>(rloss.cls);
    losses.rpn_reg = static_cast<double>(rloss.reg);

    const std::vector<Proposal> proposals =
        generate_proposals(rpn_out, pyr, cfg_.anchors, cfg_.rpn, true);

    std::vector<Box> boxes;
    boxes.reserve(proposals.size() + gts.size());
    for (const auto& p : proposals) boxes.push_back(p.box);
    const std::size_t first_injected = boxes.size();
    for (const auto& g : gts) {
      boxes.push_back(clip_box(g.box, pyr.image_w, pyr.image_h));
    }

    struct StageState {
      bool active = false;
      std::vector<int> labels;
      RoiAlignContext ctx;
      CombinedLoss<T> loss;
      int roi_count = 0;
    };
    std::array<StageState, 3> states;

    for (int t = 0; t < 3; ++t) {
      auto& st = states[static_cast<std::size_t>(t)];
      if (boxes.empty()) break;
      const auto& stage_cfg = cfg_.stages[static_cast<std::size_t>(t)];
      const StageTargets targets = assign_targets(
          boxes, gts, stage_cfg.iou_threshold, stage_cfg.delta_weights);
      const std::vector<int> sampled =
          sample_rois(targets.labels, cfg_.roi.sample_count, cfg_.roi.pos_fraction, rng);
      if (sampled.empty()) break;

      std::vector<Box> sboxes;
      std::vector<int> slabels;
      nn::Tensor<T> sdeltas({static_cast<int>(sampled.size()), 4});
      std::vector<bool> injected;
      for (std::size_t s = 0; s < sampled.size(); ++s) {
        const int i = sampled[s];
        sboxes.push_back(boxes[static_cast<std::size_t>(i)]);
        slabels.push_back(targets.labels[static_cast<std::size_t>(i)]);
        const BoxDelta& d = targets.deltas[static_cast<std::size_t>(i)];
        sdeltas.at2(static_cast<int>(s), 0) = static_cast<T>(d.tx);
        sdeltas.at2(static_cast<int>(s), 1) = static_cast<T>(d.ty);
        sdeltas.at2(static_cast<int>(s), 2) = static_cast<T>(d.tw);
        sdeltas.at2(static_cast<int>(s), 3) = static_cast<T>(d.th);
        injected.push_back(t == 0 && static_cast<std::size_t>(i) >= first_injected);
      }

      auto& module = stages_[static_cast<std::size_t>(t)];
      const auto [logits, reg] = stage_forward(module, pyr, sboxes);
      st.loss = combined_loss(logits, reg, slabels, sdeltas, loss_cfg_);
      st.labels = slabels;
      st.ctx = last_ctx_;
      st.roi_count = static_cast<int>(sboxes.size());
      st.active = true;
      losses.stage_cls[static_cast<std::size_t>(t)] = static_cast<double>(st.loss.cls);
      losses.stage_loc[static_cast<std::size_t>(t)] = static_cast<double>(st.loss.loc);

      if (t < 2) {
        boxes = refine_boxes(sboxes, slabels, logits, reg, stage_cfg, pyr, injected);
      }
    }

    losses.total = losses.rpn_cls + losses.rpn_reg;
    for (int t = 0; t < 3; ++t) {
      losses.total += cfg_.stage_loss_weights[static_cast<std::size_t>(t)] *
                      (losses.stage_cls[static_cast<std::size_t>(t)] +
                       loss_cfg_.lambda * losses.stage_loc[static_cast<std::size_t>(t)]);
    }

    // ---- backward ----
    std::array<nn::Tensor<T>, 5> g_pyr;
    for (int l = 0; l < 5; ++l) {
      g_pyr[static_cast<std::size_t>(l)].resize(
          pyr.levels[static_cast<std::size_t>(l)].shape());
    }
    for (int t = 2; t >= 0; --t) {
      auto& st = states[static_cast<std::size_t>(t)];
      if (!st.active) continue;
      const T w = static_cast<T>(
          cfg_.stage_loss_weights[static_cast<std::size_t>(t)] * grad_scale);
      nn::Tensor<T> g_logits = st.loss.grad_logits;
      nn::Tensor<T> g_reg = st.loss.grad_reg;
      for (std::int64_t i = 0; i < g_logits.numel(); ++i) g_logits[i] *= w;
      for (std::int64_t i = 0; i < g_reg.numel(); ++i) g_reg[i] *= w;
      stage_backward(stages_[static_cast<std::size_t>(t)], st.ctx, g_logits, g_reg,
                     g_pyr);
    }
    const T rs = static_cast<T>(grad_scale);
    for (auto& g : rloss.g_logits)
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= rs;
    for (auto& g : rloss.g_deltas)
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= rs;
    rpn_.backward(rloss, g_pyr);
    backbone_.backward(g_pyr);
    return losses;
  }

  std::vector<Detection> infer(const nn::Tensor<T>& image) {
    require_initialized();
    set_training(false);
    Pyramid<T> pyr = backbone_.forward(image);
    RpnOutput<T> rpn_out = rpn_.forward(pyr);
    const std::vector<Proposal> proposals =
        generate_proposals(rpn_out, pyr, cfg_.anchors, cfg_.rpn, false);
    std::vector<Box> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    if (boxes.empty()) return {};

    std::array<nn::Tensor<T>, 3> stage_probs;
    nn::Tensor<T> final_reg;
    std::vector<Box> final_inputs;
    for (int t = 0; t < 3; ++t) {
      auto& module = stages_[static_cast<std::size_t>(t)];
      const auto [logits, reg] = stage_forward(module, pyr, boxes);
      stage_probs[static_cast<std::size_t>(t)] = nn::softmax_rows(logits);
      if (t < 2) {
        const std::vector<bool> injected(boxes.size(), false);
        boxes = refine_boxes(boxes, std::vector<int>(boxes.size(), 0), logits, reg,
                             cfg_.stages[static_cast<std::size_t>(t)], pyr, injected);
      } else {
        final_inputs = boxes;
        final_reg = reg;
      }
    }

    const int n = static_cast<int>(final_inputs.size());
    nn::Tensor<T> probs = stage_probs[2];
    if (cfg_.test.average_stage_scores) {
      // stage outputs share the row count: boxes are refined 1:1 between stages
      for (std::int64_t i = 0; i < probs.numel(); ++i) {
        probs[i] = (stage_probs[0][i] + stage_probs[1][i] + probs[i]) / T(3);
      }
    }

    std::vector<Detection> detections;
    const auto& weights = cfg_.stages[2].delta_weights;
    for (int c = 1; c <= cfg_.num_classes; ++c) {
      std::vector<Box> cand;
      std::vector<double> scores;
      for (int i = 0; i < n; ++i) {
        const double score = static_cast<double>(probs.at2(i, c));
        if (score < cfg_.test.score_floor) continue;
        BoxDelta d;
        d.tx = static_cast<double>(final_reg.at2(i, (c - 1) * 4 + 0)) / weights[0];
        d.ty = static_cast<double>(final_reg.at2(i, (c - 1) * 4 + 1)) / weights[1];
        d.tw = static_cast<double>(final_reg.at2(i, (c - 1) * 4 + 2)) / weights[2];
        d.th = static_cast<double>(final_reg.at2(i, (c - 1) * 4 + 3)) / weights[3];
        const Box b = clip_box(decode_delta(final_inputs[static_cast<std::size_t>(i)], d),
                               pyr.image_w, pyr.image_h);
        if (b.width() <= 0.0 || b.height() <= 0.0) continue;
        cand.push_back(b);
        scores.push_back(score);
      }
      for (int keep : nms(cand, scores, cfg_.test.nms_iou)) {
        Detection det;
        det.box = cand[static_cast<std::size_t>(keep)];
        det.category = static_cast<ChartCategory>(c);
        det.score = scores[static_cast<std::size_t>(keep)];
        detections.push_back(det);
      }
    }
    std::sort(detections.begin(), detections.end(),
              [](const Detection& a, const Detection& b) {
                if (a.score != b.score) return a.score > b.score;
                return static_cast<int>(a.category) < static_cast<int>(b.category);
              });
    if (static_cast<int>(detections.size()) > cfg_.test.max_detections) {
      detections.resize(static_cast<std::size_t>(cfg_.test.max_detections));
    }
    return detections;
  }

  void zero_grads() {
    nn::NamedParams<T> params;
    collect(params);
    for (auto& [name, p] : params) p->zero_grad();
  }

  void collect(nn::NamedParams<T>& out) {
    backbone_.collect("backbone", out);
    rpn_.collect("rpn", out);
    for (int t = 0; t < 3; ++t) {
      const std::string prefix = "stage" + std::to_string(t + 1);
      auto& st = stages_[static_cast<std::size_t>(t)];
      st.fusion.collect(prefix + ".fusion", out);
      st.cls_head.collect(prefix + ".cls_head", out);
      st.reg_head.collect(prefix + ".reg_head", out);
    }
  }

  void set_training(bool on) {
    backbone_.set_training(on);
    rpn_.set_training(on);
    for (auto& st : stages_) st.fusion.set_training(on);
  }

  ContextFusionStage<T>& fusion_stage(int t) {
    return stages_[static_cast<std::size_t>(t)].fusion;
  }

private:
  struct StageModule {
    ContextFusionStage<T> fusion;
    nn::Linear<T> cls_head, reg_head;
  };

  void require_initialized() const {
    if (!initialized_) throw StateError("detector model is uninitialized");
  }

  std::pair<nn::Tensor<T>, nn::Tensor<T>> stage_forward(StageModule& module,
                                                        const Pyramid<T>& pyr,
                                                        const std::vector<Box>& boxes) {
    last_ctx_ = RoiAlignContext{};
    const nn::Tensor<T> rois = roi_align<T>(
        std::span<const nn::Tensor<T>>(pyr.levels.data(), pyr.levels.size()), boxes,
        &last_ctx_);
    nn::Tensor<T> maps;
    if (cfg_.roi.fusion.use_vce) {
      const nn::Tensor<T> global = module.fusion.vce_pool_global(
          std::span<const nn::Tensor<T>>(pyr.levels.data(), pyr.levels.size()));
      maps = module.fusion.vce_fuse(rois, global);
    } else {
      maps = rois;
    }
    nn::Tensor<T> enc({static_cast<int>(boxes.size()),
                       cfg_.roi.fusion.use_pce ? cfg_.roi.fusion.pce_dim : 0});
    if (cfg_.roi.fusion.use_pce) {
      std::vector<NormalizedBox> norm;
      norm.reserve(boxes.size());
      for (const auto& b : boxes) {
        norm.push_back(normalize_box(b, pyr.image_w, pyr.image_h));
      }
      enc = module.fusion.pce_encode(norm);
    }
    const nn::Tensor<T> fused = module.fusion.fuse(maps, enc);
    return {module.cls_head.forward(fused), module.reg_head.forward(fused)};
  }

  void stage_backward(StageModule& module, const RoiAlignContext& ctx,
                      const nn::Tensor<T>& g_logits, const nn::Tensor<T>& g_reg,
                      std::array<nn::Tensor<T>, 5>& g_pyr) {
    nn::Tensor<T> g_fused = module.cls_head.backward(g_logits);
    g_fused.add_scaled(module.reg_head.backward(g_reg), T(1));
    auto [g_maps, g_enc] = module.fusion.fuse_backward(g_fused);
    if (cfg_.roi.fusion.use_pce && g_enc.dim(0) > 0) {
      module.fusion.pce_backward(g_enc);
    }
    nn::Tensor<T> g_rois;
    if (cfg_.roi.fusion.use_vce) {
      auto [gr, gg] = module.fusion.vce_fuse_backward(g_maps);
      g_rois = std::move(gr);
      const std::vector<nn::Tensor<T>> lvl = module.fusion.vce_pool_backward(gg);
      for (int l = 0; l < 5; ++l) {
        g_pyr[static_cast<std::size_t>(l)].add_scaled(lvl[static_cast<std::size_t>(l)], T(1));
      }
    } else {
      g_rois = std::move(g_maps);
    }
    roi_align_backward(ctx, g_rois,
                       std::span<nn::Tensor<T>>(g_pyr.data(), g_pyr.size()));
  }

  // Positives regress with their assigned class, background rois with the
  // highest-scoring foreground class; injected ground-truth rois are dropped.
  std::vector<Box> refine_boxes(const std::vector<Box>& boxes,
                                const std::vector<int>& labels,
                                const nn::Tensor<T>& logits, const nn::Tensor<T>& reg,
                                const StageConfig& stage_cfg, const Pyramid<T>& pyr,
                                const std::vector<bool>& injected) {
    std::vector<Box> out;
    out.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (injected[i]) continue;
      int cls = labels[i];
      if (cls == 0) {
        T best = logits.at2(static_cast<int>(i), 1);
        cls = 1;
        for (int c = 2; c <= cfg_.num_classes; ++c) {
          if (logits.at2(static_cast<int>(i), c) > best) {
            best = logits.at2(static_cast<int>(i), c);
            cls = c;
          }
        }
      }
      BoxDelta d;
      d.tx = static_cast<double>(reg.at2(static_cast<int>(i), (cls - 1) * 4 + 0)) /
             stage_cfg.delta_weights[0];
      d.ty = static_cast<double>(reg.at2(static_cast<int>(i), (cls - 1) * 4 + 1)) /
             stage_cfg.delta_weights[1];
      d.tw = static_cast<double>(reg.at2(static_cast<int>(i), (cls - 1) * 4 + 2)) /
             stage_cfg.delta_weights[2];
      d.th = static_cast<double>(reg.at2(static_cast<int>(i), (cls - 1) * 4 + 3)) /
             stage_cfg.delta_weights[3];
      const Box b =
          clip_box(decode_delta(boxes[i], d), pyr.image_w, pyr.image_h);
      if (b.width() <= 0.0 || b.height() <= 0.0) continue;
      out.push_back(b);
    }
    return out;
  }

  ModelConfig cfg_;
  LossConfig loss_cfg_;
  bool initialized_ = false;
  BackboneFpn<T> backbone_;
  RpnHead<T> rpn_;
  std::array<StageModule, 3> stages_;
  RoiAlignContext last_ctx_;
};

}  // namespace chartdet::det
