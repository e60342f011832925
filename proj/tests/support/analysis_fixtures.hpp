#pragma once

#include <random>
#include <string>

#include "affect/analysis.hpp"

namespace affect::testing {

// Frame counts per class, canonical order (angry .. neutral); 19,322 in total.
inline constexpr analysis::LabelHistogram kStudyLabelCounts = {1822, 152, 79, 5309, 1386, 1605, 8969};

inline EmotionDistribution peaked(std::size_t cls, double peak = 0.4) {
  EmotionDistribution::Array p{};
  p.fill((1.0 - peak) / (kNumEmotions - 1));
  p[cls] = peak;
  return EmotionDistribution(p);
}

// Rows whose argmax labels reproduce kStudyLabelCounts; peak heights are jittered
// so the score columns are not constant.
inline analysis::EmotionScoreSeries histogram_fixture(std::uint64_t seed = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> peak(0.3, 0.9);
  analysis::EmotionScoreSeries series;
  std::size_t frame = 0;
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    for (std::size_t i = 0; i < kStudyLabelCounts[c]; ++i, ++frame) {
      series.push_back({"f" + std::to_string(frame), "child" + std::to_string(frame % 15), peaked(c, peak(rng))});
    }
  }
  return series;
}

// 15 children: 11 lean happy/surprise, 4 lean sad/angry/disgust/fear. Every
// frame carries most of its mass on neutral.
inline analysis::EmotionScoreSeries polarity_fixture() {
  const EmotionClass leaning[15] = {
      EmotionClass::happy, EmotionClass::happy,   EmotionClass::surprise, EmotionClass::happy,
      EmotionClass::happy, EmotionClass::surprise, EmotionClass::happy,   EmotionClass::happy,
      EmotionClass::surprise, EmotionClass::happy, EmotionClass::happy,   EmotionClass::sad,
      EmotionClass::angry, EmotionClass::disgust, EmotionClass::fear};
  analysis::EmotionScoreSeries series;
  for (int child = 0; child < 15; ++child) {
    for (int f = 0; f < 6; ++f) {
      EmotionDistribution::Array p{};
      p.fill(0.05);
      p[index_of(EmotionClass::neutral)] = 0.55;
      p[index_of(leaning[child])] += 0.15;
      p[static_cast<std::size_t>(f)] += 0.08;
      double total = 0;
      for (double v : p) total += v;
      for (double& v : p) v /= total;
      series.push_back({"c" + std::to_string(child) + "_" + std::to_string(f), "child" + std::to_string(100 + child),
                        EmotionDistribution(p)});
    }
  }
  return series;
}

}  // namespace affect::testing
