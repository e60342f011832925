#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affect/emotion.hpp"

namespace affect::analysis {

/// One model output row: the softmax scores for a frame.
struct ScoreRow {
  std::string frame_id;
  std::string child_id;
  EmotionDistribution scores = EmotionDistribution::uniform();
};

using EmotionScoreSeries = std::vector<ScoreRow>;

// Prediction CSV: frame_id,child_id,angry,...,neutral.
std::string prediction_csv_header();
std::string prediction_csv(const EmotionScoreSeries& series);
EmotionScoreSeries read_prediction_csv(const std::filesystem::path& path);

/// Per-class score columns, one group per emotion in canonical order.
std::vector<std::vector<double>> class_columns(const EmotionScoreSeries& series);

// ---------------------------------------------------------------- descriptive

/// Type-7 (linear interpolation) quantile of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double p);

struct ColumnStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation; 0 when n == 1
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  bool single_observation = false;
};

ColumnStats column_stats(std::span<const double> values);

struct DescriptiveStats {
  std::array<ColumnStats, kNumEmotions> classes{};
  bool empty = true;

  std::string to_csv() const;
};

DescriptiveStats descriptive_stats(const EmotionScoreSeries& series);

using LabelHistogram = std::array<std::size_t, kNumEmotions>;

/// Frame counts per argmax label (ties go to the lowest class index).
LabelHistogram label_histogram(const EmotionScoreSeries& series);
std::string label_histogram_csv(const LabelHistogram& histogram);

// ------------------------------------------------------------------- polarity

enum class Polarity { positive, negative, none };

/// happy and surprise are positive; angry, disgust, fear and sad negative; neutral has none.
Polarity polarity_of(EmotionClass c);
std::string_view polarity_name(Polarity p);

struct ChildDominance {
  std::string child_id;
  std::size_t frames = 0;
  EmotionDistribution::Array mass{};
  /// argmax of the summed non-neutral mass; empty when that mass is zero.
  std::optional<EmotionClass> dominant;
};

/// Sums each child's scores (children sorted by id).
std::vector<ChildDominance> child_dominance(const EmotionScoreSeries& series);

struct PolaritySummary {
  std::vector<ChildDominance> children;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t excluded = 0;
  double positive_fraction = 0.0;
  double negative_fraction = 0.0;

  std::string to_csv() const;
  std::string pie_csv() const;
};

PolaritySummary polarity_summary(const std::vector<ChildDominance>& children);

// -------------------------------------------------------------- significance

struct StatTestResult {
  std::string test_name;
  double statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;  // 0 when the test has a single dof
  double p_value = 1.0;
  /// 0/0 F ratio (no variance anywhere); statistic and p are then meaningless.
  bool undefined = false;
  /// Zero within-group variance with separated means: statistic is +inf, p = 0.
  bool infinite = false;
  /// Every observation identical (Kruskal-Wallis); H = 0 and p = 1 by convention.
  bool all_ties = false;

  std::string to_text() const;
};

/// Groups must be non-empty and finite, at least two of them, with N - k >= 2.
StatTestResult anova_oneway(const std::vector<std::vector<double>>& groups);
/// Mid-ranks for ties and the standard tie correction.
StatTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct PairwiseComparison {
  std::size_t group_a = 0;
  std::size_t group_b = 0;
  double mean_diff = 0.0;  // mean(a) - mean(b)
  double std_error = 0.0;
  double q = 0.0;
  double p_value = 1.0;
  double lower = 0.0;
  double upper = 0.0;
  bool significant = false;
};

struct TukeyResult {
  double alpha = 0.05;
  std::size_t groups = 0;
  double df = 0.0;
  double mse = 0.0;
  double q_critical = 0.0;
  bool zero_variance = false;
  std::vector<PairwiseComparison> pairs;  // (0,1), (0,2), ..., (k-2,k-1)

  std::string to_csv(const std::vector<std::string>& names) const;
};

/// Tukey-Kramer comparisons: se = sqrt(MSE / 2 * (1/n_a + 1/n_b)).
TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups, double alpha = 0.05);

// --------------------------------------------------------------------- plots

/// 0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd when the IQR is zero.
double silverman_bandwidth(std::span<const double> values);

struct KdeCurve {
  std::size_t n = 0;
  double bandwidth = 0.0;
  bool degenerate = false;  // zero spread: drawn as a vertical line at `location`
  double location = 0.0;
  std::vector<double> x;
  std::vector<double> density;
};

/// Gaussian KDE on an evenly spaced grid spanning [min - 4h, max + 4h].
KdeCurve gaussian_kde(std::span<const double> values, std::size_t grid_points = 200);

struct BoxSummary {
  double whisker_low = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
};

/// Whiskers reach the most extreme points within 1.5 IQR of the quartiles.
BoxSummary box_summary(std::span<const double> values);

struct AnalysisResults {
  std::size_t frames = 0;
  DescriptiveStats descriptive;
  LabelHistogram histogram{};
  PolaritySummary polarity;
  std::optional<StatTestResult> anova;
  std::optional<StatTestResult> kruskal;
  std::optional<TukeyResult> tukey;
  std::array<KdeCurve, kNumEmotions> kde{};
  std::array<BoxSummary, kNumEmotions> box{};
};

/// Runs everything over the pooled frames. Significance tests are skipped
/// (left empty) when the series is too short for them.
AnalysisResults analyze(const EmotionScoreSeries& series, double alpha = 0.05);

std::string kde_csv(const std::array<KdeCurve, kNumEmotions>& curves);
std::string box_csv(const std::array<BoxSummary, kNumEmotions>& boxes);

/// Writes the CSV/text bundle and SVG figures; returns the written paths.
std::vector<std::filesystem::path> render_reports(const AnalysisResults& results, const std::filesystem::path& dir);

}  // namespace affect::analysis
