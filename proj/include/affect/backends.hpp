#pragma once

// Deterministic backends for the preprocessing pipeline. Real detector and
// landmark models plug in through the same interfaces.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "affect/preprocess.hpp"

namespace affect::preprocess {

/// Replays precomputed detections keyed by frame id. Frames without an entry
/// yield no detections.
class TableDetector final : public FaceDetector {
 public:
  TableDetector() = default;
  explicit TableDetector(std::map<std::string, std::vector<DetectionResult>> table);
  /// CSV columns: frame_id,x,y,w,h,confidence (several rows per frame allowed).
  static TableDetector from_csv(const std::filesystem::path& path);

  void add(const std::string& frame_id, DetectionResult det);
  std::vector<DetectionResult> detect(const FrameRecord& frame) const override;

 private:
  std::map<std::string, std::vector<DetectionResult>> table_;
};

class ConstantValidator final : public FaceValidator {
 public:
  explicit ConstantValidator(bool verdict) : verdict_(verdict) {}
  bool contains_face(const RgbImage&, const FrameRecord&) const override { return verdict_; }

 private:
  bool verdict_;
};

/// Per-frame scripted verdicts; `error` makes the backend throw for that frame.
class TableValidator final : public FaceValidator {
 public:
  enum class Verdict { accept, reject, error };

  explicit TableValidator(Verdict fallback = Verdict::accept) : fallback_(fallback) {}
  /// CSV columns: frame_id,verdict with verdict in {accept, reject, error}.
  static TableValidator from_csv(const std::filesystem::path& path, Verdict fallback = Verdict::accept);

  void set(const std::string& frame_id, Verdict v) { table_[frame_id] = v; }
  bool contains_face(const RgbImage& region, const FrameRecord& frame) const override;

 private:
  std::map<std::string, Verdict> table_;
  Verdict fallback_;
};

/// Places the 468 points of a canonical face template (contours on ellipses,
/// the remaining vertices on a dome) in crop pixel coordinates, then deforms
/// mouth, eyes and brows from the crop's regional brightness. Output depends
/// only on the crop pixels.
class TemplateLandmarker final : public LandmarkExtractor {
 public:
  facegraph::LandmarkMatrix extract(const RgbImage& crop, const FrameRecord& frame) const override;
};

}  // namespace affect::preprocess
