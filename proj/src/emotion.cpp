#include "affect/emotion.hpp"

#include <cmath>
#include <string>

#include "affect/error.hpp"

namespace affect {

EmotionClass emotion_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    if (kEmotionNames[i] == name) return static_cast<EmotionClass>(i);
  }
  throw InvalidInputError("unknown emotion class '" + std::string(name) + "'");
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

bool EmotionDistribution::is_valid(const Array& p, double tolerance) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0 + tolerance) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

EmotionDistribution::EmotionDistribution(const Array& p, double tolerance) : p_(p) {
  if (!is_valid(p, tolerance)) {
    std::string msg = "not a probability distribution over 7 classes: (";
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
      msg += (i ? ", " : "") + std::to_string(p[i]);
    }
    throw InvalidInputError(msg + ")");
  }
}

EmotionDistribution EmotionDistribution::uniform() {
  Array p;
  p.fill(1.0 / kNumEmotions);
  return EmotionDistribution(p);
}

EmotionDistribution EmotionDistribution::one_hot(EmotionClass c) {
  Array p{};
  p[index_of(c)] = 1.0;
  return EmotionDistribution(p);
}

EmotionDistribution EmotionDistribution::from_weights(const Array& w) {
  double sum = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidInputError("weights must be finite and non-negative");
    sum += v;
  }
  if (sum <= 0.0) throw InvalidInputError("weights sum to zero");
  Array p;
  for (std::size_t i = 0; i < kNumEmotions; ++i) p[i] = w[i] / sum;
  return EmotionDistribution(p);
}

}  // namespace affect
