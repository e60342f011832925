#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "affect/analysis.hpp"
#include "affect/fusionnet.hpp"
#include "affect/preprocess.hpp"
#include "affect/softlabel.hpp"
#include "affect/trainer.hpp"

namespace affect::cli {

inline constexpr std::string_view kToolkitVersion = "0.3.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kIntegrity = 3, kNumerical = 4 };

/// Maps an exception onto the exit-code contract.
int exit_code_for(const std::exception& e);

struct DataPaths {
  std::filesystem::path frames;  // manifest file or frame directory
  double fps = 15.0;
  std::filesystem::path detections;
  std::filesystem::path validator;
  std::filesystem::path scores_fer;
  std::filesystem::path scores_deepface;
};

struct PreprocessSettings {
  preprocess::GateConfig gates;
  std::string detector = "table";     // table
  std::string validator = "table";    // table | accept | reject
  std::string landmarker = "template";
};

/// Every stage's settings. Loaded from JSON; unknown keys raise ConfigError
/// and relative data paths resolve against the config file's directory.
struct PipelineConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path run_dir = "run";
  DataPaths data;
  PreprocessSettings preprocess;
  softlabel::CalibrationConfig softlabel;
  fusion::FusionConfig model;
  train::TrainConfig train;
  double alpha = 0.05;

  static PipelineConfig from_json(std::string_view json_text, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);

  /// Copies the global seed into the model and trainer sections and validates everything.
  void finalize();
  /// Full effective configuration (defaults included) as pretty JSON.
  std::string to_json() const;
  std::string section_json(std::string_view section) const;
};

// ---------------------------------------------------------------------------
// Run directory bookkeeping

/// Schema tag of a stage artifact; changes whenever its file layout does.
std::string schema_hash(std::string_view artifact);

/// run_manifest.json: toolkit version plus, per stage, its config hash, seed
/// and the schema/content hashes of every artifact it wrote.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path run_dir);

  void record_stage(const std::string& stage, const std::string& config_json, std::uint64_t seed,
                    const std::vector<std::string>& artifacts);
  /// Path of an upstream artifact after checking that the stage ran, the file
  /// exists, its schema hash is current and its content hash matches.
  /// Every failure is an IntegrityError naming the hashes involved.
  std::filesystem::path require(const std::string& stage, const std::string& artifact) const;
  bool has_stage(const std::string& stage) const;

  const std::filesystem::path& run_dir() const { return run_dir_; }

 private:
  std::filesystem::path run_dir_;
};

// ---------------------------------------------------------------------------
// Stages. Each reads its inputs from and writes its outputs under run_dir.

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
};

preprocess::QualityReport cmd_preprocess(const PipelineConfig& cfg, std::ostream& log);
std::size_t cmd_label(const PipelineConfig& cfg, std::ostream& log);
std::vector<train::EpochRecord> cmd_train(const PipelineConfig& cfg, const TrainOptions& options, std::ostream& log);
train::MetricsReport cmd_eval(const PipelineConfig& cfg, std::ostream& log);
analysis::AnalysisResults cmd_analyze(const PipelineConfig& cfg, std::ostream& log);
/// Human-readable digest of run_summary.json (also written to report.txt).
std::string cmd_report(const PipelineConfig& cfg);

/// Writes the bundled synthetic dataset (64 frames from 4 clips, detector and
/// validator tables, two scorer CSVs) plus a config.json pointing at it.
struct FixtureSummary {
  std::size_t frames = 0;
  std::size_t expected_extracted = 0;
  std::filesystem::path config;
};
FixtureSummary make_fixture(const std::filesystem::path& dir, std::uint64_t seed = 7);

/// Entry point used by the `affect` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace affect::cli
