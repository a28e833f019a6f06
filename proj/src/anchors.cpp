#include "chartdet/detector/anchors.hpp"

#include <cmath>

namespace chartdet::det {

std::vector<Box> make_level_anchors(int h, int w, int stride,
                                    const AnchorConfig& cfg) {
  const double size = cfg.scale * stride;
  std::vector<Box> anchors;
  anchors.reserve(cfg.ratios.size() * static_cast<std::size_t>(h) * w);
  for (double ratio : cfg.ratios) {  // ratio = height / width
    const double aw = size / std::sqrt(ratio);
    const double ah = size * std::sqrt(ratio);
    for (int i = 0; i < h; ++i) {
      const double cy = (i + 0.5) * stride;
      for (int j = 0; j < w; ++j) {
        const double cx = (j + 0.5) * stride;
        anchors.push_back(
            Box{cx - 0.5 * aw, cy - 0.5 * ah, cx + 0.5 * aw, cy + 0.5 * ah});
      }
    }
  }
  return anchors;
}

}  // namespace chartdet::det
