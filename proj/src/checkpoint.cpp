#include "chartdet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "chartdet/errors.hpp"

namespace chartdet {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'C', 'D', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kFormatVersion = 1;
}  // namespace

void save_checkpoint(det::DetectorModel<float>& model, const std::string& path) {
  if (!model.initialized()) {
    throw StateError("save_checkpoint: model is uninitialized");
  }
  nn::NamedParams<float> params;
  model.collect(params);

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, p] : params) {
    const std::uint64_t nbytes = static_cast<std::uint64_t>(p->value.numel()) * sizeof(float);
    tensors.push_back({{"name", name},
                       {"shape", p->value.shape()},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
  }
  json header = {{"format_version", kFormatVersion},
                 {"dtype", "f32"},
                 {"model_config", json::parse(det::model_config_to_json(model.config()))},
                 {"loss_config", json::parse(det::loss_config_to_json(model.loss_config()))},
                 {"tensors", std::move(tensors)},
                 {"total_bytes", offset}};
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, p] : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

det::DetectorModel<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError("load_checkpoint: bad magic, not a checkpoint file: " + path);
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len == 0 || header_len > (1u << 26)) {
    throw SchemaError("load_checkpoint: corrupt header length");
  }
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw SchemaError("load_checkpoint: truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("load_checkpoint: header parse error: ") + e.what());
  }
  if (header.value("format_version", -1) != kFormatVersion) {
    throw SchemaError("load_checkpoint: unsupported format version");
  }
  if (header.value("dtype", "") != "f32") {
    throw SchemaError("load_checkpoint: unsupported dtype");
  }

  const det::ModelConfig cfg =
      det::model_config_from_json(header.at("model_config").dump());
  const LossConfig loss_cfg =
      det::loss_config_from_json(header.at("loss_config").dump());
  Rng rng(0);  // parameters are overwritten below
  det::DetectorModel<float> model(cfg, loss_cfg, rng);

  nn::NamedParams<float> params;
  model.collect(params);
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw SchemaError("load_checkpoint: tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != name) {
      throw SchemaError("load_checkpoint: tensor name mismatch at index " +
                        std::to_string(i) + ": expected '" + name + "', found '" +
                        t.at("name").get<std::string>() + "'");
    }
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    if (shape != p->value.shape()) {
      throw SchemaError("load_checkpoint: shape mismatch for tensor '" + name + "'");
    }
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
    if (!in) throw SchemaError("load_checkpoint: truncated payload at '" + name + "'");
  }
  return model;
}

}  // namespace chartdet
