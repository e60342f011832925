#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "affect/error.hpp"
#include "affect/softlabel.hpp"
#include "calibration_oracle.hpp"
#include "temp_dir.hpp"

using namespace affect;
using namespace affect::softlabel;
using Array = EmotionDistribution::Array;

namespace {

Array random_simplex(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Array w{};
  for (auto& v : w) v = g(rng);
  return EmotionDistribution::from_weights(w).values();
}

ScorerOutput scorer(const std::string& id, const Array& p, const std::string& frame = "f") {
  return {id, EmotionDistribution(p), frame};
}

double max_diff(const Array& a, const Array& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Array softmax_oracle(Array v) {
  double z = 0;
  for (double& x : v) z += (x = std::exp(x));
  for (double& x : v) x /= z;
  return v;
}

bool has_tie_at_top(const Array& p) {
  auto s = p;
  std::sort(s.begin(), s.end(), std::greater<>());
  return s[0] - s[1] < 1e-12;
}

double sum(const Array& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

}  // namespace

TEST_CASE("fuse: identical inputs are a fixed point") {
  std::mt19937_64 rng(1);
  const auto p = random_simplex(rng);
  const auto out = fuse(scorer("fer", p), scorer("deepface", p), {});
  CHECK(max_diff(out.values(), p) < 1e-15);
}

TEST_CASE("fuse: one-hot inputs land on the configured weights regardless of argument order") {
  const auto happy = EmotionDistribution::one_hot(EmotionClass::happy).values();
  const auto sad = EmotionDistribution::one_hot(EmotionClass::sad).values();
  const Array expected{0, 0, 0, 2.0 / 3.0, 1.0 / 3.0, 0, 0};
  CHECK(max_diff(fuse(scorer("fer", happy), scorer("deepface", sad), {}).values(), expected) < 1e-15);
  CHECK(max_diff(fuse(scorer("deepface", sad), scorer("fer", happy), {}).values(), expected) < 1e-15);
}

TEST_CASE("fuse: random pairs match the weighted-sum oracle") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_simplex(rng), q = random_simplex(rng);
    const auto out = fuse(scorer("fer", p), scorer("deepface", q), {}).values();
    Array oracle{};
    for (int k = 0; k < 7; ++k) oracle[k] = 2.0 / 3.0 * p[k] + 1.0 / 3.0 * q[k];
    CHECK(max_diff(out, oracle) < 1e-12);
    CHECK(std::abs(sum(out) - 1.0) < 1e-9);
  }
}

TEST_CASE("fuse: pairing and configuration errors") {
  const auto u = EmotionDistribution::uniform().values();
  CHECK_THROWS_AS(fuse(scorer("fer", u, "a"), scorer("deepface", u, "b"), {}), PairingError);
  CHECK_THROWS_AS(fuse(scorer("fer", u), scorer("other", u), {}), ConfigError);
  CHECK_THROWS_AS(fuse(scorer("fer", u), scorer("fer", u), {}), ConfigError);
  CalibrationConfig bad;
  bad.w_fer = 0.7;
  CHECK_THROWS_AS(fuse(scorer("fer", u), scorer("deepface", u), bad), ConfigError);
  CalibrationConfig c;
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.gamma = 1.0;
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.temperature = 3.0;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("neutral penalty with gamma 1 is the softmax of the input, not the identity") {
  std::mt19937_64 rng(3);
  const auto p = random_simplex(rng);
  const auto out = neutral_penalty(EmotionDistribution(p), 1.0).values();
  CHECK(max_diff(out, softmax_oracle(p)) < 1e-12);
  CHECK(max_diff(out, p) > 1e-3);
  // The sum switch leaves a valid distribution untouched at gamma 1.
  CHECK(max_diff(neutral_penalty(EmotionDistribution(p), 1.0, Renorm::sum).values(), p) < 1e-15);
}

TEST_CASE("neutral penalty on the uniform vector") {
  const auto out = neutral_penalty(EmotionDistribution::uniform(), 0.7).values();
  Array v;
  v.fill(1.0 / 7.0);
  v[6] *= 0.7;
  CHECK(max_diff(out, softmax_oracle(v)) < 1e-12);
  CHECK(out[6] < 1.0 / 7.0);
  for (int i = 0; i < 6; ++i) {
    CHECK(out[i] == doctest::Approx(out[0]).epsilon(1e-14));
    CHECK(out[i] > out[6]);
  }
}

TEST_CASE("neutral penalty: zero neutral stays minimal") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto w = random_simplex(rng);
    w[6] = 0.0;
    const auto out = neutral_penalty(EmotionDistribution::from_weights(w), 0.7).values();
    CHECK(out[6] <= *std::min_element(out.begin(), out.begin() + 6));
  }
}

TEST_CASE("temperature sharpening examples") {
  const auto u = EmotionDistribution::uniform();
  for (double t : {0.3, 0.7, 1.0, 2.5}) {
    CHECK(max_diff(temperature_sharpen(u, t).values(), u.values()) < 1e-15);
    const auto oh = EmotionDistribution::one_hot(EmotionClass::fear);
    CHECK(temperature_sharpen(oh, t).values() == oh.values());
  }
  const Array p{0.6, 0.4, 0, 0, 0, 0, 0};
  const auto out = temperature_sharpen(EmotionDistribution(p), 0.7).values();
  const double a = std::pow(0.6, 1 / 0.7), b = std::pow(0.4, 1 / 0.7);
  CHECK(max_diff(out, Array{a / (a + b), b / (a + b), 0, 0, 0, 0, 0}) < 1e-12);
  CHECK(out[0] > 0.6);
}

TEST_CASE("calibrate: uniform scorers under defaults") {
  const auto u = EmotionDistribution::uniform().values();
  const auto out = calibrate(scorer("fer", u), scorer("deepface", u), {}).values();
  CHECK(max_diff(out, affect::testing::calibration_oracle(u, u)) < 1e-12);
  for (int i = 0; i < 6; ++i) {
    CHECK(out[i] == doctest::Approx(out[0]).epsilon(1e-14));
    CHECK(out[i] > out[6]);
  }
}

TEST_CASE("calibrate: identical one-hot inputs with gamma 1 and T 1 keep their argmax") {
  CalibrationConfig cfg;
  cfg.gamma = 1.0;
  cfg.temperature = 1.0;
  const auto oh = EmotionDistribution::one_hot(EmotionClass::surprise).values();
  const auto out = calibrate(scorer("fer", oh), scorer("deepface", oh), cfg);
  CHECK(out.dominant() == EmotionClass::surprise);
  CHECK(out[EmotionClass::surprise] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 6.0)).epsilon(1e-12));
}

TEST_CASE("calibrate: 1,000 random pairs match the arithmetic oracle, stages keep valid simplices") {
  std::mt19937_64 rng(5);
  const auto t0 = std::chrono::steady_clock::now();
  int checked_argmax = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_simplex(rng), q = random_simplex(rng);
    const auto trace = calibrate_traced(scorer("fer", p), scorer("deepface", q), {});
    const auto oracle = affect::testing::calibration_oracle(p, q);
    REQUIRE(max_diff(trace.sharpened.values(), oracle) <= 1e-9);
    for (const auto* stage : {&trace.fused, &trace.renormalized, &trace.sharpened}) {
      CHECK(std::abs(sum(stage->values()) - 1.0) < 1e-9);
      CHECK(*std::min_element(stage->values().begin(), stage->values().end()) >= 0.0);
    }
    // Argmax over the six non-neutral classes never moves under the penalty.
    CHECK(argmax(std::span(trace.fused.values()).first(6)) == argmax(std::span(trace.renormalized.values()).first(6)));
    // When the top class is not neutral, it survives every stage.
    if (!has_tie_at_top(trace.fused.values()) && trace.fused.dominant() != EmotionClass::neutral) {
      ++checked_argmax;
      CHECK(trace.renormalized.dominant() == trace.fused.dominant());
      CHECK(trace.sharpened.dominant() == trace.fused.dominant());
    }
  }
  CHECK(checked_argmax > 500);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 5.0);
}

TEST_CASE("properties: fuse linearity, neutral rank, sharpening spread") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto p = random_simplex(rng), p2 = random_simplex(rng), q = random_simplex(rng);
    const double a = unit(rng);
    Array mix{};
    for (int k = 0; k < 7; ++k) mix[k] = a * p[k] + (1 - a) * p2[k];
    const auto lhs = fuse(scorer("fer", mix), scorer("deepface", q), {}).values();
    const auto f1 = fuse(scorer("fer", p), scorer("deepface", q), {}).values();
    const auto f2 = fuse(scorer("fer", p2), scorer("deepface", q), {}).values();
    Array rhs{};
    for (int k = 0; k < 7; ++k) rhs[k] = a * f1[k] + (1 - a) * f2[k];
    CHECK(max_diff(lhs, rhs) < 1e-12);

    auto rank_of_neutral = [](const Array& v) { return std::count_if(v.begin(), v.end(), [&](double x) { return x > v[6]; }); };
    const auto pen = neutral_penalty(EmotionDistribution(p), 0.7).values();
    CHECK(rank_of_neutral(pen) >= rank_of_neutral(p));

    const auto sharp = temperature_sharpen(EmotionDistribution(p), 0.7).values();
    const auto spread = [](const Array& v) { return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()); };
    CHECK(spread(sharp) >= spread(p) - 1e-15);
    CHECK(max_diff(temperature_sharpen(EmotionDistribution(p), 1.0).values(), p) < 1e-15);
  }
}

TEST_CASE("scorer and soft-label CSV round trip") {
  affect::testing::TempDir tmp;
  {
    std::ofstream out(tmp / "fer.csv");
    out << scorer_csv_header() << "\n";
    out << "f1,0.1,0.1,0.1,0.1,0.1,0.1,0.4\n";
    out << "f2,0.1,0.2,0.2,0.2,0.1,0.0,0.2005\n";
  }
  const auto rows = read_scorer_csv(tmp / "fer.csv", "fer");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].scorer_id == "fer");
  CHECK(std::abs(sum(rows[1].dist.values()) - 1.0) < 1e-12);

  std::ofstream(tmp / "bad.csv") << scorer_csv_header() << "\nf1,0.5,0.5,0.5,0,0,0,0\n";
  CHECK_THROWS_AS(read_scorer_csv(tmp / "bad.csv", "fer"), InvalidInputError);

  const std::vector<SoftLabel> labels{{"f1", rows[0].dist}, {"f2", rows[1].dist}};
  std::ofstream(tmp / "soft.csv") << soft_label_csv(labels);
  const auto back = read_soft_label_csv(tmp / "soft.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].frame_id == "f2");
  CHECK(back[1].dist.values() == labels[1].dist.values());
  CHECK(soft_label_csv_header().ends_with(",calib_version"));
}
