#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "affect/emotion.hpp"
#include "affect/facegraph.hpp"
#include "affect/image.hpp"

namespace affect::preprocess {

inline constexpr int kCropSize = 224;

struct FrameRecord {
  std::string frame_id;
  std::string source_video;
  double timestamp_s = 0.0;
  RgbImage image;
};

struct DetectionResult {
  Rect bbox;
  double confidence = 0.0;
  std::string detector_id;
};

/// Aligned 224x224 crop, its face graph, and (after labeling) the soft target.
struct FaceSample {
  std::string frame_id;
  RgbImage crop;
  facegraph::FaceGraph graph;
  std::optional<EmotionDistribution> soft_label;
};

struct GateConfig {
  double blur_threshold = 25.0;
  int min_face = 30;
  double min_confidence = 0.70;
  // Fraction of the box width/height added on every side during validation only.
  double validation_padding = 0.20;
};

// ---------------------------------------------------------------------------
// Quality gates

/// BT.601 luma: 0.299 R + 0.587 G + 0.114 B, unrounded.
std::vector<double> grayscale(const RgbImage& image);

/// Variance (population) of the 4-neighbour Laplacian over the valid region of
/// the grayscale image. Throws InvalidInputError below 3x3 pixels.
double blur_score(const RgbImage& image);

inline bool is_blurry(double score, const GateConfig& cfg) { return score < cfg.blur_threshold; }

enum class GateReason { accepted, low_confidence, too_small };

std::string_view to_string(GateReason r);

/// Confidence is checked first, then the size floor. Both bounds are inclusive
/// on the accepting side.
GateReason gate_detection(const DetectionResult& det, const RgbImage& image, const GateConfig& cfg = {});

/// The box grown by `fraction` of its width/height on every side, clamped to
/// the image. Each margin is rounded to the nearest pixel.
Rect padded_region(const Rect& bbox, double fraction, int image_width, int image_height);

// ---------------------------------------------------------------------------
// Pluggable backends. Implementations must be safe to call concurrently.

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<DetectionResult> detect(const FrameRecord& frame) const = 0;
};

class FaceValidator {
 public:
  virtual ~FaceValidator() = default;
  /// Verdict on whether `region` holds a face. Throwing signals a backend failure.
  virtual bool contains_face(const RgbImage& region, const FrameRecord& frame) const = 0;
};

class LandmarkExtractor {
 public:
  virtual ~LandmarkExtractor() = default;
  /// Raw (unnormalized) 468x3 landmarks for a face crop.
  virtual facegraph::LandmarkMatrix extract(const RgbImage& crop, const FrameRecord& frame) const = 0;
};

enum class ValidationOutcome { confirmed, rejected, backend_error };

/// Runs `validator` on the padded region around `det`. The padded pixels are
/// only handed to the validator; nothing derived from them is kept.
ValidationOutcome validate_with_padding(const DetectionResult& det, const FrameRecord& frame,
                                        const FaceValidator& validator, double fraction = 0.20);

// ---------------------------------------------------------------------------
// Counters

enum class FrameOutcome {
  unreadable,
  blurry,
  no_detection,
  low_confidence,
  too_small,
  validator_rejected,
  validator_error,
  landmark_failure,
  extracted,
};

inline constexpr std::size_t kNumFrameOutcomes = 9;

std::string_view to_string(FrameOutcome o);

struct QualityReport {
  std::size_t total_found = 0;
  std::size_t valid_images = 0;
  std::size_t blurry_skipped = 0;
  std::size_t no_face = 0;
  std::size_t faces_extracted = 0;
  double success_rate = 0.0;
  double processing_time_s = 0.0;
  bool empty_input = false;
  // Per-outcome breakdown; no_face is the sum of the face-level rejections.
  std::array<std::size_t, kNumFrameOutcomes> outcomes{};

  std::size_t unreadable() const { return outcomes[0]; }

  /// Flat key-value text, one line per summary counter plus the per-outcome breakdown.
  std::string to_text() const;
  static QualityReport from_text(std::string_view text);
};

/// Accumulates per-frame outcomes into a QualityReport.
class QualityCounter {
 public:
  void record(FrameOutcome outcome, std::size_t count = 1);
  void merge(const QualityCounter& other);
  QualityReport report(double processing_time_s = 0.0) const;

 private:
  std::array<std::size_t, kNumFrameOutcomes> counts_{};
};

// ---------------------------------------------------------------------------
// Pipeline

struct ManifestEntry {
  std::filesystem::path path;
  std::string frame_id;
  std::string source_video;
  double timestamp_s = 0.0;
};

/// Reads a manifest file (one frame path per line, relative to the manifest,
/// `#` comments allowed) or walks a directory in lexicographic order.
/// frame_id is the file stem, source_video the parent directory name, and the
/// timestamp is the frame's index within its video divided by `fps`.
/// Throws LoadError for a missing manifest and InvalidInputError for duplicate frame ids.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest_or_dir, double fps = 15.0);

/// Returns the decoded frame or nullopt when the file is unreadable.
using FrameLoader = std::function<std::optional<RgbImage>(const ManifestEntry&)>;

FrameLoader file_frame_loader();

struct FrameResult {
  ManifestEntry entry;
  FrameOutcome outcome = FrameOutcome::unreadable;
  double blur = 0.0;
  std::optional<DetectionResult> detection;
  std::optional<FaceSample> sample;
  std::string diagnostic;
};

struct Backends {
  const FaceDetector& detector;
  const FaceValidator& validator;
  const LandmarkExtractor& landmarker;
};

struct PipelineOptions {
  GateConfig gates;
  int workers = 1;
};

/// Processes a single frame through every gate.
FrameResult process_frame(const ManifestEntry& entry, const FrameLoader& loader, const Backends& backends,
                          const GateConfig& gates);

/// Runs every manifest entry through process_frame. `sink` sees results in
/// manifest order regardless of the worker count. A failing frame never aborts
/// the batch.
QualityReport run_pipeline(const std::vector<ManifestEntry>& manifest, const FrameLoader& loader,
                           const Backends& backends, const PipelineOptions& options,
                           const std::function<void(const FrameResult&)>& sink);

/// Writes crops/<frame_id>.png, landmarks.csv and frames.csv under a directory.
class DirectoryWriter {
 public:
  explicit DirectoryWriter(std::filesystem::path out_dir);
  void operator()(const FrameResult& result);
  /// Flushes the CSVs; call once after the pipeline finishes.
  void finish();

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::ofstream landmarks_;
  std::ofstream frames_;
};

// Header of frames.csv, the per-frame outcome index.
std::string frames_csv_header();

}  // namespace affect::preprocess
