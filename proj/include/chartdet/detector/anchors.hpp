#pragma once

#include <vector>

#include "chartdet/detector/config.hpp"
#include "chartdet/geometry.hpp"

namespace chartdet::det {

// Anchor boxes for one pyramid level, flat index = (ratio * h + row) * w + col,
// matching the channel-major layout of the RPN output maps.
std::vector<Box> make_level_anchors(int h, int w, int stride,
                                    const AnchorConfig& cfg);

}  // namespace chartdet::det
