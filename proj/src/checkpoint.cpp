#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "affect/error.hpp"
#include "affect/fusionnet.hpp"
#include "affect/hashing.hpp"
#include "affect/text.hpp"

namespace affect::fusion {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "affect-checkpoint 1";

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

json config_json(const FusionConfig& c) {
  return {{"gcn.hidden", c.gcn_hidden},
          {"attn.cnn_bottleneck", c.cnn_bottleneck},
          {"attn.gcn_bottleneck", c.gcn_bottleneck},
          {"head.dropout1", c.dropout1},
          {"head.dropout2", c.dropout2},
          {"backbone.kind", c.backbone_kind},
          {"backbone.frozen_prefix", c.frozen_prefix}};
}

json widths_json(const FusionConfig& c) {
  return {{"backbone", kBackboneWidth},     {"gcn_input", kGcnInput},
          {"gcn_hidden", c.gcn_hidden},     {"gcn_output", kGcnWidth},
          {"cnn_bottleneck", c.cnn_bottleneck}, {"gcn_bottleneck", c.gcn_bottleneck},
          {"fused", kFusedWidth},           {"classes", kNumEmotions}};
}

void append(std::string& payload, const Matrix& m) {
  const auto offset = payload.size();
  payload.resize(offset + static_cast<std::size_t>(m.size()) * sizeof(double));
  std::memcpy(payload.data() + offset, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

json tensor_entry(const std::string& name, const Matrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}};
}

struct Parsed {
  json manifest;
  std::string payload;
};

Parsed parse(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string magic, length_line;
  std::getline(in, magic);
  std::getline(in, length_line);
  if (magic != kMagic) throw LoadError(path.string() + " is not a checkpoint file");
  std::size_t length = 0;
  try {
    length = static_cast<std::size_t>(text::parse_int(length_line));
  } catch (const Error&) {
    throw LoadError(path.string() + ": malformed checkpoint header");
  }
  std::string manifest_text(length, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(length));
  Parsed p;
  try {
    p.manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": corrupt checkpoint manifest (" + e.what() + ")");
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  p.payload = rest.str();
  if (sha256_hex(p.payload) != p.manifest.value("payload_sha256", "")) {
    throw IntegrityError(path.string() + ": checkpoint payload hash mismatch");
  }
  return p;
}

FusionConfig config_from_json(const json& j) {
  FusionConfig c;
  c.gcn_hidden = j.at("gcn.hidden").get<int>();
  c.cnn_bottleneck = j.at("attn.cnn_bottleneck").get<int>();
  c.gcn_bottleneck = j.at("attn.gcn_bottleneck").get<int>();
  c.dropout1 = j.at("head.dropout1").get<double>();
  c.dropout2 = j.at("head.dropout2").get<double>();
  c.backbone_kind = j.at("backbone.kind").get<std::string>();
  c.frozen_prefix = j.at("backbone.frozen_prefix").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FusionNet& model, const CheckpointExtras& extras) {
  const auto& cfg = model.config();
  json manifest = {{"config", config_json(cfg)},
                   {"config_hash", cfg.hash()},
                   {"seed", cfg.seed},
                   {"widths", widths_json(cfg)},
                   {"topology_version", model.topology().version},
                   {"topology_hash", model.topology().content_hash},
                   {"tensors", json::array()},
                   {"extra_tensors", json::array()},
                   {"meta", extras.meta}};
  std::string payload;
  for (const auto* p : model.parameters()) {
    manifest["tensors"].push_back(tensor_entry(p->name, p->value));
    append(payload, p->value);
  }
  for (const auto& [name, m] : extras.tensors) {
    manifest["extra_tensors"].push_back(tensor_entry(name, m));
    append(payload, m);
  }
  manifest["payload_sha256"] = sha256_hex(payload);
  const std::string text = manifest.dump();
  std::string file = std::string(kMagic) + "\n" + std::to_string(text.size()) + "\n" + text + payload;
  text::write_file(path, file);
}

FusionConfig read_checkpoint_config(const std::filesystem::path& path) {
  const auto p = parse(path);
  try {
    auto cfg = config_from_json(p.manifest.at("config"));
    cfg.seed = p.manifest.at("seed").get<std::uint64_t>();
    return cfg;
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": checkpoint manifest lacks a model config (" + e.what() + ")");
  }
}

CheckpointExtras load_checkpoint(const std::filesystem::path& path, FusionNet& model) {
  const auto p = parse(path);
  const auto& m = p.manifest;
  const auto expected_widths = widths_json(model.config());
  if (m.value("widths", json::object()) != expected_widths) {
    throw IntegrityError(path.string() + ": checkpoint widths " + m.value("widths", json::object()).dump() +
                         " do not match the model " + expected_widths.dump());
  }
  if (m.value("topology_hash", "") != model.topology().content_hash) {
    throw IntegrityError(path.string() + ": checkpoint topology hash " + m.value("topology_hash", "") +
                         " differs from the loaded topology " + model.topology().content_hash);
  }
  auto params = model.parameters();
  const auto& tensors = m.at("tensors");
  if (tensors.size() != params.size()) {
    throw IntegrityError(path.string() + ": checkpoint holds " + std::to_string(tensors.size()) +
                         " tensors, the model has " + std::to_string(params.size()));
  }
  std::size_t offset = 0;
  auto read_into = [&](Matrix& dst, const json& entry) {
    const auto rows = entry.at("rows").get<Eigen::Index>(), cols = entry.at("cols").get<Eigen::Index>();
    const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (offset + bytes > p.payload.size()) throw LoadError(path.string() + ": truncated checkpoint payload");
    dst.resize(rows, cols);
    std::memcpy(dst.data(), p.payload.data() + offset, bytes);
    offset += bytes;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    const auto name = entry.at("name").get<std::string>();
    if (name != params[i]->name || entry.at("rows").get<Eigen::Index>() != params[i]->value.rows() ||
        entry.at("cols").get<Eigen::Index>() != params[i]->value.cols()) {
      throw IntegrityError(path.string() + ": tensor " + std::to_string(i) + " is '" + name + "' " +
                           entry.at("rows").dump() + "x" + entry.at("cols").dump() + ", the model expects '" +
                           params[i]->name + "' " + std::to_string(params[i]->value.rows()) + "x" +
                           std::to_string(params[i]->value.cols()));
    }
    read_into(params[i]->value, entry);
    params[i]->zero_grad();
  }
  CheckpointExtras extras;
  for (const auto& entry : m.value("extra_tensors", json::array())) read_into(extras.tensors[entry.at("name")], entry);
  extras.meta = m.value("meta", std::map<std::string, std::string>{});
  return extras;
}

}  // namespace affect::fusion
