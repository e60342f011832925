// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "affect/analysis.hpp"
#include "affect/cli.hpp"
#include "affect/fusionnet.hpp"
#include "affect/preprocess.hpp"
#include "affect/softlabel.hpp"
#include "affect/text.hpp"
#include "affect/trainer.hpp"
#include "analysis_fixtures.hpp"
#include "calibration_oracle.hpp"
#include "model_fixtures.hpp"
#include "stats_oracle.hpp"
#include "synthetic_data.hpp"
#include "temp_dir.hpp"

using namespace affect;
using Clock = std::chrono::steady_clock;
using fusion::Matrix;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

EmotionDistribution::Array random_simplex(std::mt19937_64& rng, double shape = 1.0) {
  std::gamma_distribution<double> g(shape, 1.0);
  EmotionDistribution::Array w{};
  double s = 0;
  for (auto& v : w) s += (v = g(rng) + 1e-12);
  for (auto& v : w) v /= s;
  return w;
}

// ---------------------------------------------------------------------------

Outcome calibration_suite() {
  Outcome o;
  std::mt19937_64 rng(101);
  const auto t0 = Clock::now();
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_simplex(rng, 0.8), q = random_simplex(rng, 0.8);
    const auto got = softlabel::calibrate({"fer", EmotionDistribution(p), "f"}, {"deepface", EmotionDistribution(q), "f"}, {});
    const auto want = testing::calibration_oracle(p, q);
    for (int k = 0; k < 7; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }
  const double t = seconds_since(t0);
  o.require(worst <= 1e-9, "max deviation " + num(worst) + " > 1e-9");
  o.require(t < 5.0, "runtime " + num(t) + " s");
  if (o.pass) o.detail = "1000 pairs, max deviation " + num(worst) + ", " + num(t, 2) + " s";
  return o;
}

Outcome gcn_bruteforce() {
  Outcome o;
  const auto t0 = Clock::now();
  {
    const facegraph::GraphTopology g{2, {{0, 1}}};
    fusion::GraphConvLayer layer("hand", 2, 2);
    layer.weight.value = Matrix::Identity(2, 2);
    const Matrix out = layer.forward(fusion::NormalizedAdjacency(g), Matrix::Identity(2, 2));
    o.require((out.array() - 0.5).abs().maxCoeff() < 1e-12, "2-node hand case is not all 0.5");
  }
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> nodes(1, 6);
  std::bernoulli_distribution coin(0.5);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = nodes(rng);
    facegraph::GraphTopology g{n, {}};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (coin(rng)) g.edges.push_back({i, j});
    const int fin = 1 + trial % 5, fout = 2 + trial % 4;
    fusion::GraphConvLayer layer("t", fin, fout);
    layer.init(static_cast<std::uint64_t>(trial));
    layer.bias.value = testing::random_matrix(rng, 1, fout);
    const Matrix h = testing::random_matrix(rng, static_cast<Eigen::Index>(n), fin);
    const Matrix got = layer.forward(fusion::NormalizedAdjacency(g), h);

    // Dense brute force: explicit degree loop and triple sums.
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
    for (const auto& e : g.edges) a[e.i][e.j] = a[e.j][e.i] = 1.0;
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) deg[i] += a[i][j];
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < fout; ++c) {
        double s = layer.bias.value(0, c);
        for (std::size_t j = 0; j < n; ++j) {
          double hw = 0;
          for (int k = 0; k < fin; ++k) hw += h(j, k) * layer.weight.value(k, c);
          s += a[i][j] / std::sqrt(deg[i] * deg[j]) * hw;
        }
        worst = std::max(worst, std::abs(got(i, c) - s));
      }
    }
  }
  const double t = seconds_since(t0);
  o.require(worst <= 1e-6, "max deviation " + num(worst) + " > 1e-6");
  o.require(t < 10.0, "runtime " + num(t) + " s");
  if (o.pass) o.detail = "hand case + 50 graphs, max deviation " + num(worst) + ", " + num(t, 2) + " s";
  return o;
}

Outcome kl_gradient() {
  Outcome o;
  std::mt19937_64 rng(303);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const Matrix logits = testing::random_matrix(rng, 1, 7, -3.0, 3.0);
    const std::vector<EmotionDistribution> y{train::smooth_targets(EmotionDistribution(random_simplex(rng)), 0.1)};
    const auto r = train::kl_loss(logits, y);
    for (int k = 0; k < 7; ++k) {
      Matrix plus = logits, minus = logits;
      plus(0, k) += 1e-4;
      minus(0, k) -= 1e-4;
      const double fd = (train::kl_loss(plus, y).loss - train::kl_loss(minus, y).loss) / 2e-4;
      worst = std::max(worst, std::abs(fd - r.grad(0, k)) / std::max(std::abs(fd), 1e-12));
    }
  }
  o.require(worst < 1e-4, "max relative error " + num(worst));
  if (o.pass) o.detail = "100 pairs, max relative error " + num(worst);
  return o;
}

Outcome schedule_conformance() {
  Outcome o;
  constexpr double base = 1e-4, floor = 1e-5;
  double worst = 0;
  for (int e = 0; e <= 30; ++e) {
    // Cycle i starts at 10 * (2^i - 1) and lasts 10 * 2^i epochs.
    int i = 0;
    while (10.0 * (std::pow(2.0, i + 1) - 1.0) <= e) ++i;
    const double start = 10.0 * (std::pow(2.0, i) - 1.0), len = 10.0 * std::pow(2.0, i);
    const double want = floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * (e - start) / len));
    worst = std::max(worst, std::abs(train::lr_at(e, base, floor, 10, 2) - want));
  }
  o.require(worst <= 1e-12, "max deviation " + num(worst));
  o.require(train::lr_at(10, base, floor, 10, 2) == base, "no restart at epoch 10");
  o.require(train::lr_at(30, base, floor, 10, 2) == base, "no restart at epoch 30");
  o.require(train::lr_at(9, base, floor, 10, 2) < base && train::lr_at(29, base, floor, 10, 2) < base,
            "rate not annealed before a restart");
  if (o.pass) o.detail = "epochs 0-30, max deviation " + num(worst) + ", restarts at 10 and 30";
  return o;
}

std::vector<const train::Example*> pointers(const std::vector<train::Example>& data, std::size_t begin = 0,
                                            std::size_t count = std::numeric_limits<std::size_t>::max()) {
  std::vector<const train::Example*> out;
  for (std::size_t i = begin; i < data.size() && out.size() < count; ++i) out.push_back(&data[i]);
  return out;
}

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Outcome freezing_contract() {
  Outcome o;
  const auto data = testing::synthetic_examples(16, 404);
  fusion::FusionNet model;
  const fusion::FusionNet initial = model;
  train::TrainConfig cfg;
  train::AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  for (int step = 0; step < 10; ++step) {
    train::train_step(model, pointers(data, (step % 2) * 8, 8), cfg, opt, train::rates_at(0, cfg),
                      static_cast<std::uint64_t>(step), static_cast<std::size_t>(step));
  }
  const auto before = initial.parameters();
  const auto after = model.parameters();
  std::size_t frozen_ok = 0, moved = 0;
  for (std::size_t i = 0; i < after.size(); ++i) {
    const bool same = bit_identical(after[i]->value, before[i]->value);
    if (i < 44) frozen_ok += same;
    else moved += !same;
  }
  o.require(frozen_ok == 44, std::to_string(44 - frozen_ok) + " of the first 44 tensors changed");
  o.require(moved == after.size() - 44,
            std::to_string(after.size() - 44 - moved) + " trainable tensors did not change");
  if (o.pass) o.detail = "44 frozen tensors bit-identical, " + std::to_string(moved) + " later tensors changed";
  return o;
}

// Training-set loss in eval mode, so dropout does not blur the comparison.
double dataset_loss(const fusion::FusionNet& model, const std::vector<train::Example>& data,
                    const train::TrainConfig& cfg) {
  return train::evaluate(model, pointers(data), cfg).mean_loss;
}

std::vector<double> overfit_run(const std::vector<train::Example>& data, int steps, fusion::FusionNet& model,
                                std::vector<double>* step_losses) {
  train::TrainConfig cfg;
  cfg.seed = 606;
  train::AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  const auto rates = train::rates_at(0, cfg);
  std::vector<double> checkpoints{dataset_loss(model, data, cfg)};
  for (int s = 0; s < steps; ++s) {
    const auto batch = pointers(data, static_cast<std::size_t>(s % 2) * 16, 16);
    const auto r = train::train_step(model, batch, cfg, opt, rates, nn::derive_seed(cfg.seed, "step" + std::to_string(s)),
                                     static_cast<std::size_t>(s));
    if (step_losses) step_losses->push_back(r.loss);
  }
  checkpoints.push_back(dataset_loss(model, data, cfg));
  return checkpoints;
}

Outcome overfit_sanity() {
  Outcome o;
  const auto data = testing::synthetic_examples(32, 505);
  const auto t0 = Clock::now();
  fusion::FusionConfig mc;
  mc.seed = 606;
  fusion::FusionNet model(mc);
  std::vector<double> losses;
  const auto ends = overfit_run(data, 200, model, &losses);
  const double t = seconds_since(t0);

  fusion::FusionNet again(mc);
  std::vector<double> repeat;
  overfit_run(data, 20, again, &repeat);
  bool deterministic = true;
  for (std::size_t i = 0; i < repeat.size(); ++i) deterministic &= repeat[i] == losses[i];

  const double ratio = ends[1] / ends[0];
  o.require(ratio < 0.10, "final/initial training loss " + num(ends[1], 4) + "/" + num(ends[0], 4) + " = " +
                              num(100.0 * ratio, 3) + "% (needs < 10%)");
  o.require(deterministic, "seeded rerun diverged within 20 steps");
  o.require(t < 120.0, "runtime " + num(t) + " s");
  if (o.pass) {
    o.detail = "loss " + num(ends[0], 4) + " -> " + num(ends[1], 4) + " (" + num(100.0 * ratio, 3) + "%), " +
               num(t, 3) + " s, seeded rerun identical";
  } else {
    o.detail += "; " + num(t, 3) + " s";
  }
  return o;
}

Outcome table_vi_counters() {
  Outcome o;
  using preprocess::FrameOutcome;
  std::vector<FrameOutcome> stream;
  const auto add = [&](FrameOutcome f, std::size_t n) { stream.insert(stream.end(), n, f); };
  add(FrameOutcome::unreadable, 7799);
  add(FrameOutcome::blurry, 1600);
  add(FrameOutcome::no_detection, 15000);
  add(FrameOutcome::low_confidence, 2500);
  add(FrameOutcome::too_small, 1500);
  add(FrameOutcome::validator_rejected, 1100);
  add(FrameOutcome::validator_error, 70);
  add(FrameOutcome::extracted, 19322);
  std::mt19937_64 rng(707);
  std::shuffle(stream.begin(), stream.end(), rng);
  preprocess::QualityCounter counter;
  for (auto f : stream) counter.record(f);
  const auto r = counter.report();
  o.require(r.total_found == 48891, "total " + std::to_string(r.total_found));
  o.require(r.faces_extracted == 19322, "extracted " + std::to_string(r.faces_extracted));
  o.require(r.blurry_skipped == 1600 && r.no_face == 20170, "blurry/no-face counters wrong");
  o.require(std::abs(100.0 * r.success_rate - 39.5) <= 0.05, "success rate " + num(100.0 * r.success_rate, 6) + "%");
  if (o.pass) {
    o.detail = "48891 frames -> extracted " + std::to_string(r.faces_extracted) + ", success " +
               text::format_fixed(100.0 * r.success_rate, 2) + "%";
  }
  return o;
}

Outcome figure_fixtures() {
  Outcome o;
  const auto h = analysis::label_histogram(testing::histogram_fixture());
  std::size_t total = 0;
  for (auto v : h) total += v;
  // angry, disgust, fear, happy, sad, surprise, neutral
  const analysis::LabelHistogram want = {1822, 152, 79, 5309, 1386, 1605, 8969};
  o.require(h == want, "histogram differs from the engineered counts");
  o.require(total == 19322, "histogram sums to " + std::to_string(total));
  const auto p = analysis::polarity_summary(analysis::child_dominance(testing::polarity_fixture()));
  o.require(p.positive == 11 && p.negative == 4, "polarity split " + std::to_string(p.positive) + "/" +
                                                     std::to_string(p.negative));
  o.require(std::abs(100.0 * p.positive_fraction - 73.3) <= 0.05, "positive " + num(100.0 * p.positive_fraction, 5));
  o.require(std::abs(100.0 * p.negative_fraction - 26.7) <= 0.05, "negative " + num(100.0 * p.negative_fraction, 5));
  if (o.pass) {
    o.detail = "histogram exact (sum 19322); polarity " + text::format_fixed(100.0 * p.positive_fraction, 1) + "% / " +
               text::format_fixed(100.0 * p.negative_fraction, 1) + "%";
  }
  return o;
}

Outcome statistics_crosscheck() {
  Outcome o;
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> size(3, 25);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-1.0, 1.0);
  double worst = 0;
  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (int inst = 0; inst < 20; ++inst) {
    const bool tied = inst % 2 == 1;
    std::vector<std::vector<double>> g(7);
    for (auto& xs : g) {
      const double mu = shift(rng);
      for (int i = size(rng); i > 0; --i) {
        const double v = mu + noise(rng);
        xs.push_back(tied ? std::round(v * 2.0) / 2.0 : v);
      }
    }
    const auto a = analysis::anova_oneway(g);
    const auto oa = testing::oracle_anova(g);
    worst = std::max({worst, rel(a.statistic, oa.statistic), std::abs(a.p_value - oa.p)});
    const auto k = analysis::kruskal_wallis(g);
    const auto ok = testing::oracle_kruskal(g);
    worst = std::max({worst, rel(k.statistic, ok.statistic), std::abs(k.p_value - ok.p)});
    const auto t = analysis::tukey_hsd(g);
    const auto ot = testing::oracle_tukey(g);
    if (t.pairs.size() != ot.size()) {
      o.require(false, "Tukey pair count differs");
      continue;
    }
    for (std::size_t i = 0; i < ot.size(); ++i) {
      worst = std::max({worst, rel(t.pairs[i].q, ot[i].q), std::abs(t.pairs[i].p_value - ot[i].p)});
    }
  }
  o.require(worst <= 1e-6, "max deviation " + num(worst) + " > 1e-6");

  const std::vector<double> base = {0.2, 0.5, 0.5, 0.9, 1.4, 0.1};
  const std::vector<std::vector<double>> same(7, base);
  const auto f = analysis::anova_oneway(same);
  const auto h = analysis::kruskal_wallis(same);
  o.require(f.statistic == 0.0, "F on identical groups = " + num(f.statistic));
  o.require(std::abs(h.statistic) <= 1e-12, "H on identical groups = " + num(h.statistic));
  if (o.pass) o.detail = "20 instances, max deviation " + num(worst) + "; identical groups give F = 0, H = " + num(h.statistic);
  return o;
}

Outcome shape_battery() {
  Outcome o;
  std::mt19937_64 rng(909);
  fusion::FusionNet model;
  double worst_sum = 0;
  for (int batch : {1, 3, 8}) {
    const auto images = testing::random_images(rng, batch);
    const auto nodes = testing::random_nodes(rng, static_cast<std::size_t>(batch));
    const auto r = model.forward(images, nodes, {});
    o.require(r.logits.rows() == batch && r.logits.cols() == 7, "logits shape for batch " + std::to_string(batch));
    o.require(r.logits.allFinite(), "non-finite logits");
    o.require(r.fallback_count == 0, "fallback on healthy graphs");
    for (const auto& d : model.predict(images, nodes)) {
      double s = 0;
      for (int k = 0; k < 7; ++k) s += d[k];
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
  }
  o.require(worst_sum <= 1e-6, "prediction row sum off by " + num(worst_sum));

  const auto images = testing::random_images(rng, 6);
  const auto healthy = testing::random_nodes(rng, 6);
  auto poisoned = healthy;
  poisoned[1](5, 0) = std::numeric_limits<double>::quiet_NaN();
  poisoned[4](300, 2) = -std::numeric_limits<double>::infinity();
  poisoned[5] = Matrix::Zero(12, 3);
  const auto a = model.forward(images, healthy, {});
  const auto b = model.forward(images, poisoned, {});
  const std::vector<bool> expected = {false, true, false, false, true, true};
  o.require(b.gcn_fallback == expected && b.fallback_count == 3, "fallback flags wrong");
  o.require(b.logits.allFinite(), "non-finite logits with poisoned graphs");
  for (int s = 0; s < 6; ++s) {
    const bool bad = expected[static_cast<std::size_t>(s)];
    o.require(b.f_fused.row(s).leftCols(2048) == a.f_fused.row(s).leftCols(2048), "image features changed");
    if (bad) {
      o.require(b.f_fused.row(s).rightCols(128).isZero(0.0), "graph slots not zero-filled");
    } else {
      o.require(b.f_fused.row(s) == a.f_fused.row(s), "healthy sample changed");
    }
  }
  if (o.pass) o.detail = "batches 1/3/8 finite Bx7, row sums within " + num(worst_sum) + ", fallback on 3 of 6 poisoned";
  return o;
}

Outcome end_to_end() {
  Outcome o;
  testing::TempDir tmp("affect-acceptance");
  const auto t0 = Clock::now();
  const auto fx = cli::make_fixture(tmp.path());
  for (const char* stage : {"preprocess", "label", "train", "eval", "analyze"}) {
    const std::string config = fx.config.string();
    const char* argv[] = {"affect", "--config", config.c_str(), stage};
    std::ostringstream out, err;
    const int code = cli::run(4, argv, out, err);
    if (code != 0) {
      o.require(false, std::string(stage) + " exited " + std::to_string(code) + ": " + err.str());
      return o;
    }
  }
  const double t = seconds_since(t0);
  const auto path = tmp / "run/run_summary.json";
  o.require(std::filesystem::exists(path), "run_summary.json missing");
  if (!o.pass) return o;
  const auto s = nlohmann::json::parse(text::read_file(path));
  const bool populated = s["preprocess"]["total_images_found"] == 64 &&
                         s["preprocess"]["total_faces_extracted"] == fx.expected_extracted &&
                         s["label"]["soft_labels"] == fx.expected_extracted && s["train"]["epochs"] == 2 &&
                         s["eval"]["all"]["count"] == fx.expected_extracted && s["analysis"].contains("anova") &&
                         s["analysis"].contains("kruskal_wallis") && s["analysis"].contains("tukey_hsd") &&
                         s["analysis"].contains("polarity");
  o.require(populated, "run summary incomplete");
  o.require(t < 300.0, "runtime " + num(t) + " s");
  if (o.pass) {
    o.detail = "64 frames, " + std::to_string(fx.expected_extracted) + " extracted, 2 epochs, summary complete, " +
               num(t, 3) + " s";
  }
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"calibration oracle suite", calibration_suite},
      {"graph convolution brute force", gcn_bruteforce},
      {"KL gradient check", kl_gradient},
      {"schedule conformance", schedule_conformance},
      {"freezing contract", freezing_contract},
      {"overfit sanity", overfit_sanity},
      {"preprocessing counters", table_vi_counters},
      {"histogram and polarity fixtures", figure_fixtures},
      {"statistics cross-check", statistics_crosscheck},
      {"shape and normalization battery", shape_battery},
      {"end-to-end smoke", end_to_end},
  };
  int failures = 0, index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failures += !r.pass;
    std::printf("criterion %2d %-34s %s  %s\n", index, name, r.pass ? "PASS" : "FAIL", r.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
