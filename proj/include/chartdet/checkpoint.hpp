#pragma once

#include <string>

#include "chartdet/detector/model.hpp"

namespace chartdet {

// Self-describing checkpoint: magic + version, a JSON header carrying the
// model/loss configs and a tensor directory (name, shape, offset), then the
// raw float32 payload. Round-trips are bit-exact.
void save_checkpoint(det::DetectorModel<float>& model, const std::string& path);

// Throws SchemaError on magic/version/shape mismatch or a truncated file.
det::DetectorModel<float> load_checkpoint(const std::string& path);

}  // namespace chartdet
