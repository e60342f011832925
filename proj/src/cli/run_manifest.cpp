#include <nlohmann/json.hpp>

#include "affect/cli.hpp"
#include "affect/error.hpp"
#include "affect/hashing.hpp"
#include "affect/text.hpp"

namespace affect::cli {

using nlohmann::json;

namespace {

std::string schema_text(std::string_view artifact) {
  const auto name = std::filesystem::path(artifact).filename().string();
  if (name == "landmarks.csv") return facegraph::landmark_csv_header();
  if (name == "frames.csv") return preprocess::frames_csv_header();
  if (name == "quality_report.txt") return "quality report: key = value lines, v1";
  if (name == "soft_labels.csv") return softlabel::soft_label_csv_header();
  if (name == "metrics.csv") return train::metrics_csv_header();
  if (name == "split.csv") return "frame_id,subset";
  if (name == "model.ckpt") return "affect-checkpoint 1";
  if (name == "metrics_report.txt") return "metrics report: key = value lines, v1";
  if (name == "predictions.csv") return analysis::prediction_csv_header();
  if (name == "eval_summary.json") return "eval summary json, v1";
  if (name == "run_summary.json") return "run summary json, v1";
  throw Error("no schema registered for artifact " + name);
}

constexpr const char* kManifestName = "run_manifest.json";

json read_manifest(const std::filesystem::path& run_dir) {
  const auto path = run_dir / kManifestName;
  if (!std::filesystem::exists(path)) return json{{"stages", json::object()}};
  try {
    return json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + " is corrupt: " + e.what());
  }
}

}  // namespace

std::string schema_hash(std::string_view artifact) {
  const auto name = std::filesystem::path(artifact).filename().string();
  return short_hash(name + "\n" + schema_text(name));
}

RunManifest::RunManifest(std::filesystem::path run_dir) : run_dir_(std::move(run_dir)) {}

void RunManifest::record_stage(const std::string& stage, const std::string& config_json, std::uint64_t seed,
                               const std::vector<std::string>& artifacts) {
  json m = read_manifest(run_dir_);
  m["toolkit_version"] = std::string(kToolkitVersion);
  json entry = {{"config_hash", short_hash(config_json)}, {"seed", seed}, {"artifacts", json::object()}};
  for (const auto& a : artifacts) {
    entry["artifacts"][a] = {{"schema_hash", schema_hash(a)}, {"sha256", sha256_hex(text::read_file(run_dir_ / a))}};
  }
  m["stages"][stage] = entry;
  text::write_file(run_dir_ / kManifestName, m.dump(2) + "\n");
}

bool RunManifest::has_stage(const std::string& stage) const {
  return read_manifest(run_dir_)["stages"].contains(stage);
}

std::filesystem::path RunManifest::require(const std::string& stage, const std::string& artifact) const {
  const json m = read_manifest(run_dir_);
  if (!m["stages"].contains(stage)) {
    throw IntegrityError("stage '" + stage + "' has not run in " + run_dir_.string() + " (needed for " + artifact +
                         "); run `affect " + stage + "` first");
  }
  const auto& arts = m["stages"][stage]["artifacts"];
  if (!arts.contains(artifact)) throw IntegrityError("stage '" + stage + "' recorded no artifact " + artifact);
  const auto path = run_dir_ / artifact;
  if (!std::filesystem::exists(path)) throw IntegrityError("artifact " + path.string() + " is missing");
  const std::string recorded_schema = arts[artifact].value("schema_hash", "");
  const std::string expected_schema = schema_hash(artifact);
  if (recorded_schema != expected_schema) {
    throw IntegrityError("schema hash mismatch for " + artifact + ": recorded " + recorded_schema + ", expected " +
                         expected_schema);
  }
  const std::string recorded_sha = arts[artifact].value("sha256", "");
  const std::string actual_sha = sha256_hex(text::read_file(path));
  if (recorded_sha != actual_sha) {
    throw IntegrityError("content hash mismatch for " + artifact + ": recorded " + recorded_sha + ", found " +
                         actual_sha);
  }
  return path;
}

}  // namespace affect::cli
