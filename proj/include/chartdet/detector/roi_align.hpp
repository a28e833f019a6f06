#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "chartdet/geometry.hpp"
#include "chartdet/nn/tensor.hpp"

namespace chartdet::det {

inline constexpr std::array<int, 5> kPyramidStrides{4, 8, 16, 32, 64};

// Standard size-based level assignment; RoI heads only consume the first
// four levels (the coarsest is proposal-only).
inline int roi_level(const Box& b) {
  const double s = std::sqrt(std::max(b.area(), 1e-12));
  const int k = static_cast<int>(std::floor(4.0 + std::log2(s / 224.0)));
  return std::clamp(k, 2, 5) - 2;  // 0..3 over strides 4..32
}

struct RoiAlignContext {
  std::vector<Box> boxes;
  std::vector<int> levels;
  int out_size = 7;
  int sampling = 2;
};

namespace detail {

// Bilinear weights at (y, x); points beyond a one-pixel border contribute 0.
template <class T>
struct BilinearPoint {
  int y_low = 0, x_low = 0, y_high = 0, x_high = 0;
  T w1 = 0, w2 = 0, w3 = 0, w4 = 0;
  bool valid = false;
};

template <class T>
BilinearPoint<T> bilinear_point(double y, double x, int h, int w) {
  BilinearPoint<T> p;
  if (y < -1.0 || y > h || x < -1.0 || x > w) return p;
  y = std::max(y, 0.0);
  x = std::max(x, 0.0);
  p.y_low = static_cast<int>(y);
  p.x_low = static_cast<int>(x);
  if (p.y_low >= h - 1) {
    p.y_high = p.y_low = h - 1;
    y = p.y_low;
  } else {
    p.y_high = p.y_low + 1;
  }
  if (p.x_low >= w - 1) {
    p.x_high = p.x_low = w - 1;
    x = p.x_low;
  } else {
    p.x_high = p.x_low + 1;
  }
  const T ly = static_cast<T>(y - p.y_low);
  const T lx = static_cast<T>(x - p.x_low);
  const T hy = T(1) - ly, hx = T(1) - lx;
  p.w1 = hy * hx;
  p.w2 = hy * lx;
  p.w3 = ly * hx;
  p.w4 = ly * lx;
  p.valid = true;
  return p;
}

}  // namespace detail

// Bilinear RoI alignment to out_size x out_size maps with the half-pixel
// aligned convention; 2x2 sample points per bin, averaged.
template <class T>
nn::Tensor<T> roi_align(std::span<const nn::Tensor<T>> pyramid,
                        const std::vector<Box>& boxes, RoiAlignContext* ctx) {
  const int n = static_cast<int>(boxes.size());
  const int channels = pyramid.empty() ? 0 : pyramid[0].dim(1);
  const int out = ctx ? ctx->out_size : 7;
  const int sr = ctx ? ctx->sampling : 2;
  nn::Tensor<T> rois({n, channels, out, out});
  if (ctx) {
    ctx->boxes = boxes;
    ctx->levels.assign(static_cast<std::size_t>(n), 0);
  }
  for (int r = 0; r < n; ++r) {
    const Box& b = boxes[static_cast<std::size_t>(r)];
    const int level = roi_level(b);
    if (ctx) ctx->levels[static_cast<std::size_t>(r)] = level;
    const auto& feat = pyramid[static_cast<std::size_t>(level)];
    const int h = feat.dim(2), w = feat.dim(3);
    const double scale = 1.0 / kPyramidStrides[static_cast<std::size_t>(level)];
    const double start_y = b.y1 * scale - 0.5;
    const double start_x = b.x1 * scale - 0.5;
    const double bin_h = (b.y2 - b.y1) * scale / out;
    const double bin_w = (b.x2 - b.x1) * scale / out;
    for (int ph = 0; ph < out; ++ph) {
      for (int pw = 0; pw < out; ++pw) {
        // sample points shared across channels
        std::array<detail::BilinearPoint<T>, 4> pts;
        int np = 0;
        for (int iy = 0; iy < sr; ++iy) {
          const double y = start_y + ph * bin_h + (iy + 0.5) * bin_h / sr;
          for (int ix = 0; ix < sr; ++ix) {
            const double x = start_x + pw * bin_w + (ix + 0.5) * bin_w / sr;
            pts[static_cast<std::size_t>(np++)] = detail::bilinear_point<T>(y, x, h, w);
          }
        }
        const T inv_count = T(1) / static_cast<T>(sr * sr);
        for (int c = 0; c < channels; ++c) {
          const T* fm = feat.data() + static_cast<std::int64_t>(c) * h * w;
          T acc = T(0);
          for (int p = 0; p < np; ++p) {
            const auto& pt = pts[static_cast<std::size_t>(p)];
            if (!pt.valid) continue;
            acc += pt.w1 * fm[pt.y_low * w + pt.x_low] +
                   pt.w2 * fm[pt.y_low * w + pt.x_high] +
                   pt.w3 * fm[pt.y_high * w + pt.x_low] +
                   pt.w4 * fm[pt.y_high * w + pt.x_high];
          }
          rois.at4(r, c, ph, pw) = acc * inv_count;
        }
      }
    }
  }
  return rois;
}

// Scatters RoI gradients back into per-level pyramid gradients (accumulates).
template <class T>
void roi_align_backward(const RoiAlignContext& ctx, const nn::Tensor<T>& g_rois,
                        std::span<nn::Tensor<T>> g_pyramid) {
  const int n = static_cast<int>(ctx.boxes.size());
  if (n == 0) return;
  const int channels = g_rois.dim(1);
  const int out = ctx.out_size;
  const int sr = ctx.sampling;
  for (int r = 0; r < n; ++r) {
    const Box& b = ctx.boxes[static_cast<std::size_t>(r)];
    const int level = ctx.levels[static_cast<std::size_t>(r)];
    auto& gfeat = g_pyramid[static_cast<std::size_t>(level)];
    const int h = gfeat.dim(2), w = gfeat.dim(3);
    const double scale = 1.0 / kPyramidStrides[static_cast<std::size_t>(level)];
    const double start_y = b.y1 * scale - 0.5;
    const double start_x = b.x1 * scale - 0.5;
    const double bin_h = (b.y2 - b.y1) * scale / out;
    const double bin_w = (b.x2 - b.x1) * scale / out;
    for (int ph = 0; ph < out; ++ph) {
      for (int pw = 0; pw < out; ++pw) {
        std::array<detail::BilinearPoint<T>, 4> pts;
        int np = 0;
        for (int iy = 0; iy < sr; ++iy) {
          const double y = start_y + ph * bin_h + (iy + 0.5) * bin_h / sr;
          for (int ix = 0; ix < sr; ++ix) {
            const double x = start_x + pw * bin_w + (ix + 0.5) * bin_w / sr;
            pts[static_cast<std::size_t>(np++)] = detail::bilinear_point<T>(y, x, h, w);
          }
        }
        const T inv_count = T(1) / static_cast<T>(sr * sr);
        for (int c = 0; c < channels; ++c) {
          const T g = g_rois.at4(r, c, ph, pw) * inv_count;
          T* gm = gfeat.data() + static_cast<std::int64_t>(c) * h * w;
          for (int p = 0; p < np; ++p) {
            const auto& pt = pts[static_cast<std::size_t>(p)];
            if (!pt.valid) continue;
            gm[pt.y_low * w + pt.x_low] += g * pt.w1;
            gm[pt.y_low * w + pt.x_high] += g * pt.w2;
            gm[pt.y_high * w + pt.x_low] += g * pt.w3;
            gm[pt.y_high * w + pt.x_high] += g * pt.w4;
          }
        }
      }
    }
  }
}

}  // namespace chartdet::det
