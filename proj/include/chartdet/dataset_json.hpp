#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chartdet/taxonomy.hpp"

namespace chartdet {

struct DatasetImage {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
};

struct DatasetAnnotation {
  std::int64_t image_id = 0;
  LabeledBox labeled;                    // ground truth: no score
  std::optional<std::int64_t> source_id; // id in the pre-refinement source
};

// In-memory form of the detection-dataset JSON (images / annotations /
// categories arrays, boxes stored as [x,y,w,h], category ids 1..18).
struct Dataset {
  std::vector<DatasetImage> images;
  std::vector<DatasetAnnotation> annotations;

  std::vector<const DatasetAnnotation*> annotations_of(std::int64_t image_id) const;
};

// A single predicted detection, as written by the inference CLI.
struct Prediction {
  std::int64_t image_id = 0;
  LabeledBox labeled;  // score always present
};

std::string to_dataset_json(const Dataset& ds);
Dataset from_dataset_json(const std::string& text);  // throws SchemaError

std::string to_predictions_json(const std::vector<Prediction>& preds);
std::vector<Prediction> from_predictions_json(const std::string& text);

// PMC-style source annotation file consumed by the convert subcommand:
// {"images":[...], "annotations":[{"image_id","id","bbox":[x,y,w,h],
//  "category":"tick label", "axis":"x"|"y" (optional)}]}
struct SourceDataset {
  std::vector<DatasetImage> images;
  std::vector<std::pair<std::int64_t, SourceAnnotation>> annotations;  // (image_id, ann)
};

std::string to_source_json(const SourceDataset& ds);
SourceDataset from_source_json(const std::string& text);  // throws SchemaError

std::string read_file(const std::string& path);   // throws std::runtime_error
void write_file(const std::string& path, const std::string& contents);

}  // namespace chartdet
