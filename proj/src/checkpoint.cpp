#include "kneemark/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <json.hpp>

namespace kneemark {

namespace fs = std::filesystem;
using nlohmann::json;
using Kind = CheckpointError::Kind;

std::vector<std::uint8_t> encode_f32_le(std::span<const float> values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int shift = 0; shift < 32; shift += 8) bytes.push_back(std::uint8_t((bits >> shift) & 0xFFu));
  }
  return bytes;
}

std::vector<float> decode_f32_le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw CheckpointError(Kind::kTruncated, "parameter blob length is not a multiple of 4");
  std::vector<float> values;
  values.reserve(bytes.size() / 4);
  for (size_t i = 0; i < bytes.size(); i += 4) {
    const std::uint32_t bits = std::uint32_t(bytes[i]) | (std::uint32_t(bytes[i + 1]) << 8) |
                               (std::uint32_t(bytes[i + 2]) << 16) | (std::uint32_t(bytes[i + 3]) << 24);
    values.push_back(std::bit_cast<float>(bits));
  }
  return values;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"width", c.width},       {"depth", c.depth},     {"landmarks", c.landmarks},
              {"input_side", c.input_side}, {"beta", c.beta},  {"dropout", c.dropout},
              {"block", to_string(c.block)}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.width = j.at("width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.landmarks = j.at("landmarks").get<int>();
  c.input_side = j.at("input_side").get<int>();
  c.beta = j.at("beta").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.block = parse_block_kind(j.at("block").get<std::string>());
  return c;
}

json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointError(Kind::kIo, "cannot open " + (dir / "manifest.json").string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kManifestInvalid, std::string("manifest is not valid JSON: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const HourglassModel<float>& model, const fs::path& dir) {
  fs::create_directories(dir);
  json params = json::array();
  std::vector<std::uint8_t> blob;
  for (const auto& p : model.parameters()) {
    const Shape& s = p.var.shape();
    const auto& data = p.var.value().data();
    params.push_back(json{{"name", p.name},
                          {"shape", {s.n, s.c, s.h, s.w}},
                          {"offset", blob.size()},
                          {"count", data.size()},
                          {"trainable", p.trainable}});
    const auto bytes = encode_f32_le(std::span<const float>(data.data(), size_t(data.size())));
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  const json manifest{{"format_version", kCheckpointFormatVersion},
                      {"dtype", "float32-le"},
                      {"config", config_to_json(model.config())},
                      {"parameters", params}};
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::kIo, "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(1) << '\n';
  }
  std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::kIo, "cannot write " + (dir / "params.bin").string());
  out.write(reinterpret_cast<const char*>(blob.data()), std::streamsize(blob.size()));
  if (!out) throw CheckpointError(Kind::kIo, "short write to " + (dir / "params.bin").string());
}

ModelConfig read_checkpoint_config(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  try {
    return config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kManifestInvalid, std::string("bad config section: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::kManifestInvalid, std::string("bad config section: ") + e.what());
  }
}

HourglassModel<float> load_checkpoint(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  int version = 0;
  ModelConfig config;
  json entries;
  try {
    version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError(Kind::kVersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                        " (this build reads " +
                                                        std::to_string(kCheckpointFormatVersion) + ")");
    }
    if (manifest.at("dtype").get<std::string>() != "float32-le") {
      throw CheckpointError(Kind::kManifestInvalid, "unsupported dtype " + manifest.at("dtype").dump());
    }
    config = config_from_json(manifest.at("config"));
    entries = manifest.at("parameters");
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kManifestInvalid, std::string("malformed manifest: ") + e.what());
  }

  std::unique_ptr<HourglassModel<float>> model;
  try {
    model = std::make_unique<HourglassModel<float>>(config, 0);
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::kManifestInvalid, std::string("manifest config is invalid: ") + e.what());
  }
  auto& params = model->parameters();
  if (!entries.is_array() || entries.size() != params.size()) {
    throw CheckpointError(Kind::kNameMismatch, "manifest lists " + std::to_string(entries.size()) +
                                                   " parameters, architecture has " + std::to_string(params.size()));
  }

  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot open " + (dir / "params.bin").string());
  const std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t expected_offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const json& e = entries[i];
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;
    size_t count = 0;
    try {
      name = e.at("name").get<std::string>();
      shape = e.at("shape").get<std::vector<int>>();
      offset = e.at("offset").get<size_t>();
      count = e.at("count").get<size_t>();
    } catch (const json::exception& ex) {
      throw CheckpointError(Kind::kManifestInvalid, "parameter entry " + std::to_string(i) + ": " + ex.what());
    }
    if (name != p.name) {
      throw CheckpointError(Kind::kNameMismatch,
                            "parameter " + std::to_string(i) + " is '" + name + "', expected '" + p.name + "'");
    }
    const Shape& s = p.var.shape();
    if (shape != std::vector<int>{s.n, s.c, s.h, s.w} || count != size_t(s.size())) {
      throw CheckpointError(Kind::kShapeMismatch, "parameter '" + name + "' has manifest shape that disagrees with " +
                                                      s.str());
    }
    if (offset != expected_offset) {
      throw CheckpointError(Kind::kManifestInvalid, "parameter '" + name + "' has offset " + std::to_string(offset) +
                                                        ", expected " + std::to_string(expected_offset));
    }
    if (offset + count * 4 > blob.size()) {
      throw CheckpointError(Kind::kTruncated, "params.bin ends inside parameter '" + name + "'");
    }
    const auto values = decode_f32_le(std::span<const std::uint8_t>(blob.data() + offset, count * 4));
    p.var.mutable_value().data() = Eigen::Map<const Eigen::ArrayXf>(values.data(), Eigen::Index(values.size()));
    expected_offset = offset + count * 4;
  }
  if (expected_offset != blob.size()) {
    throw CheckpointError(Kind::kTruncated, "params.bin has " + std::to_string(blob.size() - expected_offset) +
                                                " trailing bytes");
  }
  return std::move(*model);
}

}  // namespace kneemark
