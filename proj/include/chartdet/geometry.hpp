#pragma once

#include <cmath>

namespace chartdet {

// Axis-aligned box in continuous pixel coordinates, corner format.
// area = (x2-x1)*(y2-y1), no +1 convention.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x2 >= x1 && y2 >= y1;
  }

  bool contains(const Box& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

// Box with coordinates as fractions of the image size, each in [0,1].
struct NormalizedBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

// Center/size log-space regression offsets between a proposal and a target.
struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

// Clamp a box to the image rectangle [0,width] x [0,height].
Box clip_box(const Box& b, double width, double height);

// Smallest box containing both inputs.
Box union_box(const Box& a, const Box& b);

// Clip to the image, then divide x by width and y by height.
// Throws std::invalid_argument for nonpositive image dimensions.
NormalizedBox normalize_box(const Box& b, double width, double height);

// Standard R-CNN center/size parameterization. encode requires a proposal
// with positive width and height (throws std::invalid_argument otherwise);
// decode_delta(p, encode_delta(p, t)) == t within 1e-6 per coordinate.
BoxDelta encode_delta(const Box& proposal, const Box& target);
Box decode_delta(const Box& proposal, const BoxDelta& delta);

}  // namespace chartdet
