#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "chartdet/errors.hpp"
#include "chartdet/geometry.hpp"
#include "chartdet/nn/attention.hpp"
#include "chartdet/nn/layers.hpp"
#include "chartdet/nn/se_block.hpp"

namespace chartdet {

struct ContextFusionConfig {
  bool use_vce = true;
  bool use_pce = true;
  int fc_hidden = 512;
  int visual_dim = 1024;
  int pce_dim = 512;
  int pce_layers = 2;
  int pce_heads = 8;
  int pce_ffn = 1024;
  int pce_block_size = 1024;
  int se_reduction = 16;

  int fused_dim() const { return visual_dim + (use_pce ? pce_dim : 0); }
};

// Local-global context fusion for one cascade stage. The three stage modules
// share this architecture but are constructed independently (unshared
// weights). All methods operate on a single image's pyramid and its RoIs;
// forward state is cached for exactly one backward pass.
template <class T>
class ContextFusionStage {
public:
  static constexpr int kLevels = 5;
  static constexpr int kChannels = 256;
  static constexpr int kPoolSize = 7;

  ContextFusionStage() = default;
  ContextFusionStage(const ContextFusionConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.use_vce) {
      for (int i = 0; i < kLevels; ++i) level_pools_.emplace_back(kPoolSize, kPoolSize);
      abstract1_ = nn::Conv2d<T>(kLevels * kChannels, 2 * kChannels, 3, 1, 1, rng);
      abstract2_ = nn::Conv2d<T>(2 * kChannels, kChannels, 3, 1, 1, rng);
      se_ = nn::SEBlock<T>(2 * kChannels, cfg.se_reduction, rng);
      reduce_ = nn::Conv2d<T>(2 * kChannels, kChannels, 1, 1, 0, rng);
    }
    if (cfg.use_pce) {
      embed_ = nn::Linear<T>(4, cfg.pce_dim, rng,
                             std::sqrt(2.0 / (4 + cfg.pce_dim)));
      for (int i = 0; i < cfg.pce_layers; ++i) {
        pce_layers_.emplace_back(cfg.pce_dim, cfg.pce_heads, cfg.pce_ffn, rng);
      }
    }
    const int flat = kChannels * kPoolSize * kPoolSize;
    fc1_ = nn::Linear<T>(flat, cfg.fc_hidden, rng);
    fc2_ = nn::Linear<T>(cfg.fc_hidden, cfg.visual_dim, rng);
  }

  const ContextFusionConfig& config() const { return cfg_; }

  // --- Visual context enhancement -----------------------------------------

  // Pyramid levels [1,256,H_l,W_l] -> global visual feature [1,256,7,7]:
  // adaptive 7x7 pool per level, channel concat to 1280, two 3x3 convs.
  nn::Tensor<T> vce_pool_global(std::span<const nn::Tensor<T>> pyramid) {
    require_vce();
    if (static_cast<int>(pyramid.size()) != kLevels) {
      throw std::invalid_argument("vce_pool_global: expected 5 pyramid levels");
    }
    nn::Tensor<T> stacked({1, kLevels * kChannels, kPoolSize, kPoolSize});
    const std::int64_t level_elems =
        static_cast<std::int64_t>(kChannels) * kPoolSize * kPoolSize;
    for (int l = 0; l < kLevels; ++l) {
      const auto& lv = pyramid[static_cast<std::size_t>(l)];
      if (lv.dim(0) != 1 || lv.dim(1) != kChannels) {
        throw std::invalid_argument("vce_pool_global: level must be [1,256,H,W]");
      }
      const nn::Tensor<T> pooled = level_pools_[static_cast<std::size_t>(l)].forward(lv);
      std::copy(pooled.data(), pooled.data() + level_elems,
                stacked.data() + l * level_elems);
    }
    return abs_relu2_.forward(abstract2_.forward(
        abs_relu1_.forward(abstract1_.forward(stacked))));
  }

  // Gradients for each pyramid level, in level order.
  std::vector<nn::Tensor<T>> vce_pool_backward(const nn::Tensor<T>& g_global) {
    require_vce();
    const nn::Tensor<T> g_stacked = abstract1_.backward(
        abs_relu1_.backward(abstract2_.backward(abs_relu2_.backward(g_global))));
    std::vector<nn::Tensor<T>> out;
    const std::int64_t level_elems =
        static_cast<std::int64_t>(kChannels) * kPoolSize * kPoolSize;
    for (int l = 0; l < kLevels; ++l) {
      nn::Tensor<T> slice({1, kChannels, kPoolSize, kPoolSize});
      std::copy(g_stacked.data() + l * level_elems,
                g_stacked.data() + (l + 1) * level_elems, slice.data());
      out.push_back(level_pools_[static_cast<std::size_t>(l)].backward(slice));
    }
    return out;
  }

  // RoI maps [N,256,7,7] + global [1,256,7,7] -> enhanced [N,256,7,7].
  // Channel concat (local first, global in the rest), SE gate, 1x1 reduce.
  nn::Tensor<T> vce_fuse(const nn::Tensor<T>& rois, const nn::Tensor<T>& global) {
    require_vce();
    check_roi_shape(rois, "vce_fuse");
    if (global.shape() != std::vector<int>({1, kChannels, kPoolSize, kPoolSize})) {
      throw std::invalid_argument("vce_fuse: global feature must be [1,256,7,7]");
    }
    const int n = rois.dim(0);
    const std::int64_t hw = kPoolSize * kPoolSize;
    const std::int64_t half = kChannels * hw;
    nn::Tensor<T> cat({n, 2 * kChannels, kPoolSize, kPoolSize});
    for (int i = 0; i < n; ++i) {
      std::copy(rois.data() + i * half, rois.data() + (i + 1) * half,
                cat.data() + i * 2 * half);
      std::copy(global.data(), global.data() + half,
                cat.data() + i * 2 * half + half);
    }
    return reduce_.forward(se_.forward(cat));
  }

  // Returns {grad wrt RoI maps, grad wrt global (summed over RoIs)}.
  std::pair<nn::Tensor<T>, nn::Tensor<T>> vce_fuse_backward(const nn::Tensor<T>& gy) {
    require_vce();
    const nn::Tensor<T> g_cat = se_.backward(reduce_.backward(gy));
    const int n = g_cat.dim(0);
    const std::int64_t hw = kPoolSize * kPoolSize;
    const std::int64_t half = kChannels * hw;
    nn::Tensor<T> g_rois({n, kChannels, kPoolSize, kPoolSize});
    nn::Tensor<T> g_global({1, kChannels, kPoolSize, kPoolSize});
    for (int i = 0; i < n; ++i) {
      std::copy(g_cat.data() + i * 2 * half, g_cat.data() + i * 2 * half + half,
                g_rois.data() + i * half);
      const T* gg = g_cat.data() + i * 2 * half + half;
      for (std::int64_t e = 0; e < half; ++e) g_global[e] += gg[e];
    }
    return {std::move(g_rois), std::move(g_global)};
  }

  // --- Positional context encoding -----------------------------------------

  // One image's normalized proposal boxes -> [N,512] relational encodings.
  // The logical sequence is padded to the fixed block size with masked zero
  // slots; masked attention makes the first N outputs independent of the
  // padding, so the computation runs on the N real rows directly.
  nn::Tensor<T> pce_encode(const std::vector<NormalizedBox>& boxes) {
    require_pce();
    const int n = static_cast<int>(boxes.size());
    if (n > cfg_.pce_block_size) {
      throw CapacityError("pce_encode: " + std::to_string(n) +
                          " boxes exceed block size " +
                          std::to_string(cfg_.pce_block_size));
    }
    if (n == 0) return nn::Tensor<T>({0, cfg_.pce_dim});
    nn::Tensor<T> coords({n, 4});
    for (int i = 0; i < n; ++i) {
      const auto& b = boxes[static_cast<std::size_t>(i)];
      coords.at2(i, 0) = static_cast<T>(b.x1);
      coords.at2(i, 1) = static_cast<T>(b.y1);
      coords.at2(i, 2) = static_cast<T>(b.x2);
      coords.at2(i, 3) = static_cast<T>(b.y2);
    }
    nn::Tensor<T> h = embed_.forward(coords);
    for (auto& layer : pce_layers_) h = layer.forward(h);
    return h;
  }

  // Gradient w.r.t. the raw box coordinates, [N,4].
  nn::Tensor<T> pce_backward(const nn::Tensor<T>& gy) {
    require_pce();
    if (gy.dim(0) == 0) return nn::Tensor<T>({0, 4});
    nn::Tensor<T> g = gy;
    for (auto it = pce_layers_.rbegin(); it != pce_layers_.rend(); ++it) {
      g = it->backward(g);
    }
    return embed_.backward(g);
  }

  // --- Fusion head ----------------------------------------------------------

  // Enhanced RoI maps -> flatten -> fc -> relu -> fc -> relu -> visual vector;
  // concatenated with the positional encodings when PCE is enabled.
  nn::Tensor<T> fuse(const nn::Tensor<T>& maps, const nn::Tensor<T>& encodings) {
    check_roi_shape(maps, "fuse");
    const int n = maps.dim(0);
    const nn::Tensor<T> flat =
        maps.reshaped({n, kChannels * kPoolSize * kPoolSize});
    const nn::Tensor<T> vis =
        fc_relu2_.forward(fc2_.forward(fc_relu1_.forward(fc1_.forward(flat))));
    if (!cfg_.use_pce) return vis;
    if (encodings.dim(0) != n || encodings.dim(1) != cfg_.pce_dim) {
      throw std::invalid_argument("fuse: encoding count must match RoI count");
    }
    nn::Tensor<T> out({n, cfg_.fused_dim()});
    for (int i = 0; i < n; ++i) {
      std::copy(vis.data() + static_cast<std::int64_t>(i) * cfg_.visual_dim,
                vis.data() + static_cast<std::int64_t>(i + 1) * cfg_.visual_dim,
                out.data() + static_cast<std::int64_t>(i) * cfg_.fused_dim());
      std::copy(encodings.data() + static_cast<std::int64_t>(i) * cfg_.pce_dim,
                encodings.data() + static_cast<std::int64_t>(i + 1) * cfg_.pce_dim,
                out.data() + static_cast<std::int64_t>(i) * cfg_.fused_dim() +
                    cfg_.visual_dim);
    }
    return out;
  }

  // Returns {grad wrt enhanced maps, grad wrt encodings}.
  std::pair<nn::Tensor<T>, nn::Tensor<T>> fuse_backward(const nn::Tensor<T>& gy) {
    const int n = gy.dim(0);
    nn::Tensor<T> g_vis({n, cfg_.visual_dim});
    nn::Tensor<T> g_enc({n, cfg_.use_pce ? cfg_.pce_dim : 0});
    if (cfg_.use_pce) {
      for (int i = 0; i < n; ++i) {
        const T* row = gy.data() + static_cast<std::int64_t>(i) * cfg_.fused_dim();
        std::copy(row, row + cfg_.visual_dim,
                  g_vis.data() + static_cast<std::int64_t>(i) * cfg_.visual_dim);
        std::copy(row + cfg_.visual_dim, row + cfg_.fused_dim(),
                  g_enc.data() + static_cast<std::int64_t>(i) * cfg_.pce_dim);
      }
    } else {
      g_vis = gy;
    }
    const nn::Tensor<T> g_flat = fc1_.backward(
        fc_relu1_.backward(fc2_.backward(fc_relu2_.backward(g_vis))));
    return {g_flat.reshaped({n, kChannels, kPoolSize, kPoolSize}), std::move(g_enc)};
  }

  void set_training(bool on) {
    if (cfg_.use_vce) {
      abstract1_.set_training(on);
      abstract2_.set_training(on);
      reduce_.set_training(on);
    }
  }

  void collect(const std::string& prefix, nn::NamedParams<T>& out) {
    if (cfg_.use_vce) {
      abstract1_.collect(prefix + ".vce.abstract1", out);
      abstract2_.collect(prefix + ".vce.abstract2", out);
      se_.collect(prefix + ".vce.se", out);
      reduce_.collect(prefix + ".vce.reduce", out);
    }
    if (cfg_.use_pce) {
      embed_.collect(prefix + ".pce.embed", out);
      for (std::size_t i = 0; i < pce_layers_.size(); ++i) {
        pce_layers_[i].collect(prefix + ".pce.layer" + std::to_string(i), out);
      }
    }
    fc1_.collect(prefix + ".head.fc1", out);
    fc2_.collect(prefix + ".head.fc2", out);
  }

  // Test hooks.
  nn::SEBlock<T>& se() { return se_; }
  nn::Conv2d<T>& reduce_conv() { return reduce_; }

private:
  void require_vce() const {
    if (!cfg_.use_vce) throw StateError("visual context enhancement is disabled");
  }
  void require_pce() const {
    if (!cfg_.use_pce) throw StateError("positional context encoding is disabled");
  }
  static void check_roi_shape(const nn::Tensor<T>& t, const char* op) {
    if (t.ndim() != 4 || t.dim(1) != kChannels || t.dim(2) != kPoolSize ||
        t.dim(3) != kPoolSize) {
      throw std::invalid_argument(std::string(op) + ": RoI maps must be [N,256,7,7]");
    }
  }

  ContextFusionConfig cfg_;
  std::vector<nn::AdaptiveAvgPool2d<T>> level_pools_;
  nn::Conv2d<T> abstract1_, abstract2_;
  nn::ReLU<T> abs_relu1_, abs_relu2_;
  nn::SEBlock<T> se_;
  nn::Conv2d<T> reduce_;
  nn::Linear<T> embed_;
  std::vector<nn::TransformerEncoderLayer<T>> pce_layers_;
  nn::Linear<T> fc1_, fc2_;
  nn::ReLU<T> fc_relu1_, fc_relu2_;
};

}  // namespace chartdet
