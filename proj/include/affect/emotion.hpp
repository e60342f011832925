#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

namespace affect {

inline constexpr std::size_t kNumEmotions = 7;

// Canonical class order. Every probability vector and every file schema in
// the toolkit is indexed this way.
enum class EmotionClass : std::size_t {
  angry = 0,
  disgust = 1,
  fear = 2,
  happy = 3,
  sad = 4,
  surprise = 5,
  neutral = 6,
};

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"};

constexpr std::size_t index_of(EmotionClass c) { return static_cast<std::size_t>(c); }
constexpr std::string_view name_of(EmotionClass c) { return kEmotionNames[index_of(c)]; }
EmotionClass emotion_from_name(std::string_view name);

/// Index of the largest entry; ties resolve to the lowest class index.
std::size_t argmax(std::span<const double> values);

/// A probability vector over the seven classes. Construction validates the
/// simplex constraints (entries in [0, 1], sum within `tolerance` of 1).
class EmotionDistribution {
 public:
  using Array = std::array<double, kNumEmotions>;

  static constexpr double kDefaultTolerance = 1e-6;

  explicit EmotionDistribution(const Array& p, double tolerance = kDefaultTolerance);

  static EmotionDistribution uniform();
  static EmotionDistribution one_hot(EmotionClass c);
  /// Divides by the sum; throws InvalidInputError for negative, non-finite or all-zero input.
  static EmotionDistribution from_weights(const Array& w);

  static bool is_valid(const Array& p, double tolerance = kDefaultTolerance);

  double operator[](std::size_t i) const { return p_[i]; }
  double operator[](EmotionClass c) const { return p_[index_of(c)]; }
  const Array& values() const { return p_; }
  std::span<const double> span() const { return p_; }
  EmotionClass dominant() const { return static_cast<EmotionClass>(argmax(p_)); }

 private:
  Array p_;
};

}  // namespace affect
