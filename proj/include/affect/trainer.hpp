#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affect/emotion.hpp"
#include "affect/fusionnet.hpp"
#include "affect/image.hpp"

namespace affect::train {

using nn::Matrix;

struct ScheduleConfig {
  double t0 = 10.0;
  double t_mult = 2.0;
  double eta_min = 1e-5;
  // Per-group floors; unset means eta_min.
  std::optional<double> eta_min_backbone;
  std::optional<double> eta_min_head;
  // Off: the rate changes once per epoch.
  bool interpolate_within_epoch = false;
};

struct TrainConfig {
  double lr_backbone = 3e-6;
  double lr_head = 1e-5;
  double weight_decay = 5e-4;
  double clip_norm = 1.0;
  double smoothing = 0.1;
  ScheduleConfig schedule;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  /// One message per group whose annealing floor exceeds its base rate.
  std::vector<std::string> warnings() const;
  std::string canonical() const;
};

/// (1 - eps) * y + eps / 7.
EmotionDistribution smooth_targets(const EmotionDistribution& y, double epsilon);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
};

/// Mean over the batch of KL(target || softmax(logits)), with 0 log 0 = 0.
/// Throws NumericalError naming the first row with non-finite logits.
LossResult kl_loss(const Matrix& logits, const std::vector<EmotionDistribution>& targets);

/// Cosine annealing with warm restarts: cycle i lasts t0 * t_mult^i epochs and
/// the rate returns to `base` at every restart.
double lr_at(double epoch, double base, double eta_min, double t0, double t_mult);

struct GroupRates {
  double backbone = 0.0;
  double head = 0.0;
};

GroupRates rates_at(double epoch, const TrainConfig& cfg);

/// Global L2 norm over the gradients of all trainable tensors.
double global_grad_norm(const std::vector<nn::Parameter*>& params);

/// Scales every trainable gradient by max_norm / norm when the norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_gradients(const std::vector<nn::Parameter*>& params, double max_norm);

/// Adam with decoupled weight decay, applied to every trainable tensor.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 5e-4);
  explicit AdamW(const TrainConfig& cfg) : AdamW(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay) {}

  void step(const std::vector<nn::Parameter*>& params, const GroupRates& rates);
  std::uint64_t steps() const { return t_; }

  fusion::CheckpointExtras export_state() const;
  void import_state(const fusion::CheckpointExtras& extras);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::uint64_t t_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

// ---------------------------------------------------------------------------

struct Example {
  std::string frame_id;
  std::string child_id;
  RgbImage crop;
  Matrix nodes;  // 468 x 3
  EmotionDistribution target = EmotionDistribution::uniform();
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

/// forward, loss, backward, clip, AdamW update. When the logits, loss or
/// gradient norm are not finite the step is abandoned before touching any
/// parameter and NumericalError is thrown.
StepResult train_step(fusion::FusionNet& model, const std::vector<const Example*>& batch, const TrainConfig& cfg,
                      AdamW& optimizer, const GroupRates& rates, std::uint64_t dropout_seed,
                      std::size_t batch_index = 0);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  // Neither predicted nor present in the labels.
  bool absent = false;
};

struct MetricsReport {
  std::array<ClassMetrics, kNumEmotions> per_class{};
  std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions> confusion{};  // [true][predicted]
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double mean_loss = 0.0;
  std::size_t count = 0;
  bool empty = true;

  std::string to_text() const;
};

/// Precision/recall/F1 per class (0/0 counts as 0); macro averages run over
/// the classes that occur in the labels or the predictions.
MetricsReport compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted);

struct Prediction {
  std::string frame_id;
  EmotionDistribution dist;
};

/// Eval-mode predictions in dataset order.
std::vector<Prediction> predict_all(const fusion::FusionNet& model, const std::vector<const Example*>& data,
                                    int batch_size = 32);

/// Hard labels are the argmax of each soft target; mean_loss is the KL
/// against the smoothed targets.
MetricsReport evaluate(const fusion::FusionNet& model, const std::vector<const Example*>& data, const TrainConfig& cfg);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle, then the first round(fraction * n) indices go to validation.
Split split_by_frame(std::size_t n, double val_fraction, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double lr_backbone = 0.0;
  double lr_head = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRecord& r);

struct FitOptions {
  int start_epoch = 0;
  std::function<void(const EpochRecord&, const fusion::FusionNet&, const AdamW&)> on_epoch_end;
};

/// Trains for cfg.epochs epochs from options.start_epoch; per-epoch metrics
/// come from `validation` (or from `train` when validation is empty).
std::vector<EpochRecord> fit(fusion::FusionNet& model, AdamW& optimizer, const std::vector<Example>& data,
                             const Split& split, const TrainConfig& cfg, const FitOptions& options = {});

}  // namespace affect::train
