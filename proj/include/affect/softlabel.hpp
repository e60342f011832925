#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "affect/emotion.hpp"

namespace affect::softlabel {

inline constexpr std::string_view kCalibrationVersion = "calib-v1";

struct ScorerOutput {
  std::string scorer_id;
  EmotionDistribution dist;
  std::string frame_id;
};

/// How the penalized vector is brought back onto the simplex. `softmax`
/// exponentiates the probabilities (it is not the identity on a valid
/// distribution); `sum` divides by the total.
enum class Renorm { softmax, sum };

Renorm renorm_from_string(std::string_view s);
std::string_view to_string(Renorm r);

struct CalibrationConfig {
  // Roles are bound by scorer id so argument order never swaps the weights.
  std::string fer_role_id = "fer";
  std::string deepface_role_id = "deepface";
  double w_fer = 2.0 / 3.0;
  double w_deepface = 1.0 / 3.0;
  double gamma = 0.7;
  double temperature = 0.7;
  Renorm renorm = Renorm::softmax;

  /// Throws ConfigError when weights are negative or do not sum to 1 (1e-9),
  /// gamma is outside (0, 1], or the temperature is not positive.
  void validate() const;
};

/// Weighted average of the two scorer outputs, weights looked up by scorer id.
/// Throws PairingError when the frame ids differ and ConfigError when the ids
/// do not match the configured roles.
EmotionDistribution fuse(const ScorerOutput& a, const ScorerOutput& b, const CalibrationConfig& cfg);

/// Scales the neutral entry by gamma, then renormalizes.
EmotionDistribution neutral_penalty(const EmotionDistribution& p, double gamma, Renorm renorm = Renorm::softmax);

/// p_i^(1/T) / sum_j p_j^(1/T).
EmotionDistribution temperature_sharpen(const EmotionDistribution& p, double temperature);

struct CalibrationTrace {
  EmotionDistribution fused;
  EmotionDistribution::Array penalized;  // before renormalization
  EmotionDistribution renormalized;
  EmotionDistribution sharpened;
};

/// fuse -> neutral_penalty -> temperature_sharpen.
EmotionDistribution calibrate(const ScorerOutput& a, const ScorerOutput& b, const CalibrationConfig& cfg);
CalibrationTrace calibrate_traced(const ScorerOutput& a, const ScorerOutput& b, const CalibrationConfig& cfg);

// Scorer CSV: frame_id,angry,disgust,fear,happy,sad,surprise,neutral.
// Rows whose sum is within 1e-3 of one are renormalized; others are rejected.
std::vector<ScorerOutput> read_scorer_csv(const std::filesystem::path& path, const std::string& scorer_id);
std::string scorer_csv_header();

struct SoftLabel {
  std::string frame_id;
  EmotionDistribution dist;
};

// Soft-label CSV: the scorer schema plus a calib_version column.
std::string soft_label_csv_header();
std::string soft_label_csv(const std::vector<SoftLabel>& labels);
std::vector<SoftLabel> read_soft_label_csv(const std::filesystem::path& path);

}  // namespace affect::softlabel
