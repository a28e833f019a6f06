#include "chartdet/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace chartdet {

namespace {
// Keeps decoded sizes finite: exp(kMaxLogRatio) ~ 1000/16.
constexpr double kMaxLogRatio = 4.135166556742356;  // ln(1000/16)
constexpr double kMinSize = 1e-9;
}  // namespace

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

Box clip_box(const Box& b, double width, double height) {
  Box out;
  out.x1 = std::clamp(b.x1, 0.0, width);
  out.y1 = std::clamp(b.y1, 0.0, height);
  out.x2 = std::clamp(b.x2, 0.0, width);
  out.y2 = std::clamp(b.y2, 0.0, height);
  return out;
}

Box union_box(const Box& a, const Box& b) {
  return Box{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
             std::max(a.y2, b.y2)};
}

NormalizedBox normalize_box(const Box& b, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw std::invalid_argument("normalize_box: image dimensions must be positive");
  }
  const Box c = clip_box(b, width, height);
  return NormalizedBox{c.x1 / width, c.y1 / height, c.x2 / width, c.y2 / height};
}

BoxDelta encode_delta(const Box& proposal, const Box& target) {
  const double pw = proposal.width();
  const double ph = proposal.height();
  if (!(pw > 0.0) || !(ph > 0.0)) {
    throw std::invalid_argument("encode_delta: proposal must have positive size");
  }
  const double tw = std::max(target.width(), kMinSize);
  const double th = std::max(target.height(), kMinSize);
  BoxDelta d;
  d.tx = (target.cx() - proposal.cx()) / pw;
  d.ty = (target.cy() - proposal.cy()) / ph;
  d.tw = std::log(tw / pw);
  d.th = std::log(th / ph);
  return d;
}

Box decode_delta(const Box& proposal, const BoxDelta& delta) {
  const double pw = proposal.width();
  const double ph = proposal.height();
  if (!(pw > 0.0) || !(ph > 0.0)) {
    throw std::invalid_argument("decode_delta: proposal must have positive size");
  }
  const double cx = proposal.cx() + delta.tx * pw;
  const double cy = proposal.cy() + delta.ty * ph;
  const double w = pw * std::exp(std::min(delta.tw, kMaxLogRatio));
  const double h = ph * std::exp(std::min(delta.th, kMaxLogRatio));
  return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace chartdet
