#include "chartdet/dataset_json.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "chartdet/errors.hpp"

namespace chartdet {

using nlohmann::json;

namespace {

json box_to_xywh(const Box& b) {
  return json::array({b.x1, b.y1, b.width(), b.height()});
}

Box box_from_xywh(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 4) {
    throw SchemaError(ctx + ": bbox must be an array [x,y,w,h]");
  }
  for (const auto& v : j) {
    if (!v.is_number()) throw SchemaError(ctx + ": bbox entries must be numbers");
  }
  const double x = j[0].get<double>();
  const double y = j[1].get<double>();
  const double w = j[2].get<double>();
  const double h = j[3].get<double>();
  if (w < 0.0 || h < 0.0) throw SchemaError(ctx + ": bbox has negative size");
  return Box{x, y, x + w, y + h};
}

const json& require(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(ctx + ": missing field '" + key + "'");
  return *it;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("JSON parse error: ") + e.what());
  }
}

std::vector<DatasetImage> images_from_json(const json& root) {
  std::vector<DatasetImage> images;
  const json& arr = require(root, "images", "document");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = "images[" + std::to_string(i) + "]";
    const json& im = arr[i];
    DatasetImage di;
    di.id = require(im, "id", ctx).get<std::int64_t>();
    di.file_name = im.value("file_name", std::string{});
    di.width = require(im, "width", ctx).get<int>();
    di.height = require(im, "height", ctx).get<int>();
    images.push_back(std::move(di));
  }
  return images;
}

json images_to_json(const std::vector<DatasetImage>& images) {
  json arr = json::array();
  for (const auto& im : images) {
    arr.push_back({{"id", im.id},
                   {"file_name", im.file_name},
                   {"width", im.width},
                   {"height", im.height}});
  }
  return arr;
}

}  // namespace

std::vector<const DatasetAnnotation*> Dataset::annotations_of(
    std::int64_t image_id) const {
  std::vector<const DatasetAnnotation*> out;
  for (const auto& a : annotations) {
    if (a.image_id == image_id) out.push_back(&a);
  }
  return out;
}

std::string to_dataset_json(const Dataset& ds) {
  json root;
  root["images"] = images_to_json(ds.images);

  json anns = json::array();
  for (const auto& a : ds.annotations) {
    json ja = {{"id", a.labeled.id},
               {"image_id", a.image_id},
               {"category_id", static_cast<int>(a.labeled.category)},
               {"bbox", box_to_xywh(a.labeled.box)},
               {"area", a.labeled.box.area()},
               {"iscrowd", 0}};
    if (a.source_id) ja["source_id"] = *a.source_id;
    anns.push_back(std::move(ja));
  }
  root["annotations"] = std::move(anns);

  json cats = json::array();
  for (int id = 1; id <= kNumCategories; ++id) {
    const ChartCategory c = static_cast<ChartCategory>(id);
    cats.push_back({{"id", id},
                    {"name", category_name(c)},
                    {"supercategory",
                     is_structural_area(c) ? "structural-area" : "skeleton"}});
  }
  root["categories"] = std::move(cats);
  return root.dump(2) + "\n";
}

Dataset from_dataset_json(const std::string& text) {
  const json root = parse(text);
  Dataset ds;
  ds.images = images_from_json(root);

  if (auto it = root.find("categories"); it != root.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string ctx = "categories[" + std::to_string(i) + "]";
      const json& c = (*it)[i];
      const int id = require(c, "id", ctx).get<int>();
      const std::string name = require(c, "name", ctx).get<std::string>();
      if (category_from_id(id) != category_from_name(name)) {
        throw SchemaError(ctx + ": id/name pair does not match the 18-class schema");
      }
    }
  }

  const json& anns = require(root, "annotations", "document");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string ctx = "annotations[" + std::to_string(i) + "]";
    const json& a = anns[i];
    DatasetAnnotation da;
    da.image_id = require(a, "image_id", ctx).get<std::int64_t>();
    da.labeled.id = require(a, "id", ctx).get<std::int64_t>();
    da.labeled.category =
        category_from_id(require(a, "category_id", ctx).get<int>());
    da.labeled.box = box_from_xywh(require(a, "bbox", ctx), ctx);
    if (auto sit = a.find("source_id"); sit != a.end() && !sit->is_null()) {
      da.source_id = sit->get<std::int64_t>();
    }
    ds.annotations.push_back(std::move(da));
  }
  return ds;
}

std::string to_predictions_json(const std::vector<Prediction>& preds) {
  json arr = json::array();
  for (const auto& p : preds) {
    arr.push_back({{"image_id", p.image_id},
                   {"category_id", static_cast<int>(p.labeled.category)},
                   {"bbox", box_to_xywh(p.labeled.box)},
                   {"score", p.labeled.score.value_or(0.0)}});
  }
  return arr.dump(2) + "\n";
}

std::vector<Prediction> from_predictions_json(const std::string& text) {
  const json arr = parse(text);
  if (!arr.is_array()) throw SchemaError("predictions: top level must be an array");
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = "predictions[" + std::to_string(i) + "]";
    const json& p = arr[i];
    Prediction pr;
    pr.image_id = require(p, "image_id", ctx).get<std::int64_t>();
    pr.labeled.category = category_from_id(require(p, "category_id", ctx).get<int>());
    pr.labeled.box = box_from_xywh(require(p, "bbox", ctx), ctx);
    const double score = require(p, "score", ctx).get<double>();
    if (!(score >= 0.0 && score <= 1.0)) {
      throw SchemaError(ctx + ": score must lie in [0,1]");
    }
    pr.labeled.score = score;
    pr.labeled.id = static_cast<std::int64_t>(i) + 1;
    preds.push_back(std::move(pr));
  }
  return preds;
}

std::string to_source_json(const SourceDataset& ds) {
  json root;
  root["images"] = images_to_json(ds.images);
  json anns = json::array();
  for (const auto& [image_id, a] : ds.annotations) {
    json ja = {{"id", a.id},
               {"image_id", image_id},
               {"category", a.raw_category},
               {"bbox", box_to_xywh(a.box)}};
    if (a.axis_association) {
      ja["axis"] = *a.axis_association == AxisSide::kX ? "x" : "y";
    }
    anns.push_back(std::move(ja));
  }
  root["annotations"] = std::move(anns);
  return root.dump(2) + "\n";
}

SourceDataset from_source_json(const std::string& text) {
  const json root = parse(text);
  SourceDataset ds;
  ds.images = images_from_json(root);
  const json& anns = require(root, "annotations", "document");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string ctx = "annotations[" + std::to_string(i) + "]";
    const json& a = anns[i];
    SourceAnnotation sa;
    sa.id = require(a, "id", ctx).get<std::int64_t>();
    sa.raw_category = require(a, "category", ctx).get<std::string>();
    raw_category_from_name(sa.raw_category);  // validate early
    sa.box = box_from_xywh(require(a, "bbox", ctx), ctx);
    if (auto axis = a.find("axis"); axis != a.end() && !axis->is_null()) {
      const std::string s = axis->get<std::string>();
      if (s == "x") sa.axis_association = AxisSide::kX;
      else if (s == "y") sa.axis_association = AxisSide::kY;
      else throw SchemaError(ctx + ": axis must be 'x' or 'y', got '" + s + "'");
    }
    const std::int64_t image_id = require(a, "image_id", ctx).get<std::int64_t>();
    ds.annotations.emplace_back(image_id, std::move(sa));
  }
  return ds;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << contents;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace chartdet
