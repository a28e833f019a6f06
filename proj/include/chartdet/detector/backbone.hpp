#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "chartdet/detector/config.hpp"
#include "chartdet/nn/layers.hpp"

namespace chartdet::det {

// Five feature maps at strides 4..64, 256 channels each.
template <class T>
struct Pyramid {
  static constexpr int kChannels = 256;
  std::array<nn::Tensor<T>, 5> levels;
  int image_w = 0;
  int image_h = 0;
};

template <class T>
class ResidualBlock {
public:
  ResidualBlock() = default;
  ResidualBlock(int in_c, int out_c, int stride, int gn_groups, Rng& rng)
      : projected_(stride != 1 || in_c != out_c),
        conv1_(in_c, out_c, 3, stride, 1, rng),
        gn1_(gn_groups, out_c),
        conv2_(out_c, out_c, 3, 1, 1, rng),
        gn2_(gn_groups, out_c) {
    if (projected_) {
      proj_ = nn::Conv2d<T>(in_c, out_c, 1, stride, 0, rng);
      gn_proj_ = nn::GroupNorm<T>(gn_groups, out_c);
    }
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x) {
    nn::Tensor<T> identity =
        projected_ ? gn_proj_.forward(proj_.forward(x)) : x;
    nn::Tensor<T> h = gn2_.forward(
        conv2_.forward(relu1_.forward(gn1_.forward(conv1_.forward(x)))));
    h.add_scaled(identity, T(1));
    return relu2_.forward(h);
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& gy) {
    const nn::Tensor<T> g = relu2_.backward(gy);
    nn::Tensor<T> gx = conv1_.backward(
        gn1_.backward(relu1_.backward(conv2_.backward(gn2_.backward(g)))));
    if (projected_) {
      gx.add_scaled(proj_.backward(gn_proj_.backward(g)), T(1));
    } else {
      gx.add_scaled(g, T(1));
    }
    return gx;
  }

  void set_training(bool on) {
    conv1_.set_training(on);
    conv2_.set_training(on);
    if (projected_) proj_.set_training(on);
  }

  void collect(const std::string& prefix, nn::NamedParams<T>& out) {
    conv1_.collect(prefix + ".conv1", out);
    gn1_.collect(prefix + ".gn1", out);
    conv2_.collect(prefix + ".conv2", out);
    gn2_.collect(prefix + ".gn2", out);
    if (projected_) {
      proj_.collect(prefix + ".proj", out);
      gn_proj_.collect(prefix + ".gn_proj", out);
    }
  }

private:
  bool projected_ = false;
  nn::Conv2d<T> conv1_, conv2_, proj_;
  nn::GroupNorm<T> gn1_, gn2_, gn_proj_;
  nn::ReLU<T> relu1_, relu2_;
};

// Compact residual backbone (4 stages, strides 4..32) with an FPN neck
// producing the 256-channel pyramid plus the stride-64 subsampled level.
template <class T>
class BackboneFpn {
public:
  BackboneFpn() = default;
  BackboneFpn(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    stem_conv_ = nn::Conv2d<T>(3, cfg.stem_channels, 3, 2, 1, rng);
    stem_gn_ = nn::GroupNorm<T>(cfg.gn_groups, cfg.stem_channels);
    int in_c = cfg.stem_channels;
    for (int s = 0; s < 4; ++s) {
      std::vector<ResidualBlock<T>> blocks;
      const int out_c = cfg.stage_channels[static_cast<std::size_t>(s)];
      for (int b = 0; b < cfg.stage_blocks[static_cast<std::size_t>(s)]; ++b) {
        blocks.emplace_back(in_c, out_c, b == 0 ? 2 : 1, cfg.gn_groups, rng);
        in_c = out_c;
      }
      stages_[static_cast<std::size_t>(s)] = std::move(blocks);
    }
    for (int l = 0; l < 4; ++l) {
      laterals_[static_cast<std::size_t>(l)] = nn::Conv2d<T>(
          cfg.stage_channels[static_cast<std::size_t>(l)], 256, 1, 1, 0, rng);
      outputs_[static_cast<std::size_t>(l)] = nn::Conv2d<T>(256, 256, 3, 1, 1, rng);
    }
  }

  // x: [1,3,H,W], min side 64 -> pyramid of [1,256,h_l,w_l].
  Pyramid<T> forward(const nn::Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != 3) {
      throw std::invalid_argument("extract_pyramid: expected [1,3,H,W] image");
    }
    if (x.dim(2) < 64 || x.dim(3) < 64) {
      throw std::invalid_argument("extract_pyramid: min image side is 64 px");
    }
    Pyramid<T> pyr;
    pyr.image_h = x.dim(2);
    pyr.image_w = x.dim(3);
    nn::Tensor<T> h = stem_relu_.forward(stem_gn_.forward(stem_conv_.forward(x)));
    std::array<nn::Tensor<T>, 4> c;  // C2..C5
    for (int s = 0; s < 4; ++s) {
      for (auto& block : stages_[static_cast<std::size_t>(s)]) h = block.forward(h);
      c[static_cast<std::size_t>(s)] = h;
    }
    std::array<nn::Tensor<T>, 4> t;  // top-down accumulators
    for (int l = 3; l >= 0; --l) {
      t[static_cast<std::size_t>(l)] =
          laterals_[static_cast<std::size_t>(l)].forward(c[static_cast<std::size_t>(l)]);
      if (l < 3) {
        const auto& above = t[static_cast<std::size_t>(l + 1)];
        t[static_cast<std::size_t>(l)].add_scaled(
            nn::upsample2x_crop(above, t[static_cast<std::size_t>(l)].dim(2),
                                t[static_cast<std::size_t>(l)].dim(3)),
            T(1));
      }
    }
    for (int l = 0; l < 4; ++l) {
      pyr.levels[static_cast<std::size_t>(l)] =
          outputs_[static_cast<std::size_t>(l)].forward(t[static_cast<std::size_t>(l)]);
    }
    p5_shape_ = {pyr.levels[3].dim(2), pyr.levels[3].dim(3)};
    pyr.levels[4] = nn::subsample2(pyr.levels[3]);
    return pyr;
  }

  // g: gradients for P2..P6.
  void backward(std::array<nn::Tensor<T>, 5>& g) {
    g[3].add_scaled(nn::subsample2_backward(g[4], p5_shape_[0], p5_shape_[1]), T(1));
    std::array<nn::Tensor<T>, 4> gt;
    for (int l = 3; l >= 0; --l) {
      gt[static_cast<std::size_t>(l)] =
          outputs_[static_cast<std::size_t>(l)].backward(g[static_cast<std::size_t>(l)]);
    }
    for (int l = 0; l < 3; ++l) {  // reverse the top-down adds, finest first
      gt[static_cast<std::size_t>(l + 1)].add_scaled(
          nn::upsample2x_crop_backward(gt[static_cast<std::size_t>(l)],
                                       gt[static_cast<std::size_t>(l + 1)].dim(2),
                                       gt[static_cast<std::size_t>(l + 1)].dim(3)),
          T(1));
    }
    std::array<nn::Tensor<T>, 4> gc;
    for (int l = 0; l < 4; ++l) {
      gc[static_cast<std::size_t>(l)] =
          laterals_[static_cast<std::size_t>(l)].backward(gt[static_cast<std::size_t>(l)]);
    }
    // backbone stages, coarsest block first; C-level grads chain downward
    nn::Tensor<T> gh = std::move(gc[3]);
    for (int s = 3; s >= 0; --s) {
      auto& blocks = stages_[static_cast<std::size_t>(s)];
      for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        gh = it->backward(gh);
      }
      if (s > 0) gh.add_scaled(gc[static_cast<std::size_t>(s - 1)], T(1));
    }
    stem_conv_.backward(stem_gn_.backward(stem_relu_.backward(gh)));
  }

  void set_training(bool on) {
    stem_conv_.set_training(on);
    for (auto& stage : stages_)
      for (auto& b : stage) b.set_training(on);
    for (auto& c : laterals_) c.set_training(on);
    for (auto& c : outputs_) c.set_training(on);
  }

  void collect(const std::string& prefix, nn::NamedParams<T>& out) {
    stem_conv_.collect(prefix + ".stem.conv", out);
    stem_gn_.collect(prefix + ".stem.gn", out);
    for (int s = 0; s < 4; ++s) {
      auto& blocks = stages_[static_cast<std::size_t>(s)];
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        blocks[b].collect(prefix + ".stage" + std::to_string(s + 1) + ".block" +
                              std::to_string(b),
                          out);
      }
    }
    for (int l = 0; l < 4; ++l) {
      laterals_[static_cast<std::size_t>(l)].collect(
          prefix + ".fpn.lateral" + std::to_string(l + 2), out);
      outputs_[static_cast<std::size_t>(l)].collect(
          prefix + ".fpn.output" + std::to_string(l + 2), out);
    }
  }

  // Test hook for the zero-projection contract.
  nn::Conv2d<T>& output_conv(int level) {
    return outputs_[static_cast<std::size_t>(level)];
  }

private:
  BackboneConfig cfg_;
  nn::Conv2d<T> stem_conv_;
  nn::GroupNorm<T> stem_gn_;
  nn::ReLU<T> stem_relu_;
  std::array<std::vector<ResidualBlock<T>>, 4> stages_;
  std::array<nn::Conv2d<T>, 4> laterals_, outputs_;
  std::array<int, 2> p5_shape_{};
};

}  // namespace chartdet::det
