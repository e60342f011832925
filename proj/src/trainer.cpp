#include "affect/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::train {

void TrainConfig::validate() const {
  if (!(lr_backbone > 0 && lr_head > 0)) throw ConfigError("learning rates must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(smoothing >= 0 && smoothing < 1)) throw ConfigError("smoothing must lie in [0, 1)");
  if (!(schedule.t0 > 0) || !(schedule.t_mult >= 1)) throw ConfigError("schedule needs T0 > 0 and T_mult >= 1");
  for (double floor : {schedule.eta_min, schedule.eta_min_backbone.value_or(1.0), schedule.eta_min_head.value_or(1.0)})
    if (!(floor > 0)) throw ConfigError("eta_min must be positive");
  if (epochs < 0 || batch_size <= 0) throw ConfigError("epochs must be >= 0 and batch_size > 0");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in [0, 1)");
}

std::vector<std::string> TrainConfig::warnings() const {
  std::vector<std::string> out;
  const double floor_b = schedule.eta_min_backbone.value_or(schedule.eta_min);
  const double floor_h = schedule.eta_min_head.value_or(schedule.eta_min);
  if (floor_b > lr_backbone) {
    out.push_back("eta_min " + text::format_double(floor_b) + " exceeds the backbone learning rate " +
                  text::format_double(lr_backbone) + "; the backbone rate will anneal upward within each cycle");
  }
  if (floor_h > lr_head) {
    out.push_back("eta_min " + text::format_double(floor_h) + " exceeds the head learning rate " +
                  text::format_double(lr_head) + "; the head rate will anneal upward within each cycle");
  }
  return out;
}

std::string TrainConfig::canonical() const {
  std::ostringstream s;
  s << "lr_backbone=" << text::format_double(lr_backbone) << "\nlr_head=" << text::format_double(lr_head)
    << "\nweight_decay=" << text::format_double(weight_decay) << "\nclip_norm=" << text::format_double(clip_norm)
    << "\nsmoothing=" << text::format_double(smoothing) << "\nschedule.t0=" << text::format_double(schedule.t0)
    << "\nschedule.t_mult=" << text::format_double(schedule.t_mult)
    << "\nschedule.eta_min=" << text::format_double(schedule.eta_min) << "\nschedule.eta_min_backbone="
    << (schedule.eta_min_backbone ? text::format_double(*schedule.eta_min_backbone) : "")
    << "\nschedule.eta_min_head=" << (schedule.eta_min_head ? text::format_double(*schedule.eta_min_head) : "")
    << "\nschedule.interpolate=" << schedule.interpolate_within_epoch << "\nepochs=" << epochs
    << "\nbatch_size=" << batch_size << "\nseed=" << seed << "\nval_fraction=" << text::format_double(val_fraction)
    << "\n";
  return s.str();
}

EmotionDistribution smooth_targets(const EmotionDistribution& y, double epsilon) {
  EmotionDistribution::Array out{};
  for (std::size_t i = 0; i < kNumEmotions; ++i) out[i] = (1.0 - epsilon) * y[i] + epsilon / kNumEmotions;
  return EmotionDistribution(out);
}

LossResult kl_loss(const Matrix& logits, const std::vector<EmotionDistribution>& targets) {
  const auto batch = logits.rows();
  if (logits.cols() != static_cast<Eigen::Index>(kNumEmotions) || static_cast<std::size_t>(batch) != targets.size()) {
    throw ShapeError("kl_loss: logits are " + std::to_string(batch) + "x" + std::to_string(logits.cols()) + " for " +
                     std::to_string(targets.size()) + " targets");
  }
  LossResult r;
  r.grad.resize(batch, logits.cols());
  if (batch == 0) return r;
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (!logits.row(b).allFinite()) throw NumericalError("non-finite logits in batch row " + std::to_string(b));
    const double m = logits.row(b).maxCoeff();
    const double lse = m + std::log((logits.row(b).array() - m).exp().sum());
    double loss = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double y = targets[b][static_cast<std::size_t>(k)];
      const double log_s = logits(b, k) - lse;
      if (y > 0.0) loss += y * (std::log(y) - log_s);
      r.grad(b, k) = (std::exp(log_s) - y) / static_cast<double>(batch);
    }
    r.loss += loss;
  }
  r.loss /= static_cast<double>(batch);
  return r;
}

double lr_at(double epoch, double base, double eta_min, double t0, double t_mult) {
  double t_cur = std::max(0.0, epoch);
  double t_i = t0;
  while (t_cur >= t_i) {
    t_cur -= t_i;
    t_i *= t_mult;
  }
  return eta_min + (base - eta_min) * (1.0 + std::cos(std::numbers::pi * t_cur / t_i)) / 2.0;
}

GroupRates rates_at(double epoch, const TrainConfig& cfg) {
  const auto& s = cfg.schedule;
  const double e = s.interpolate_within_epoch ? epoch : std::floor(epoch);
  return {lr_at(e, cfg.lr_backbone, s.eta_min_backbone.value_or(s.eta_min), s.t0, s.t_mult),
          lr_at(e, cfg.lr_head, s.eta_min_head.value_or(s.eta_min), s.t0, s.t_mult)};
}

double global_grad_norm(const std::vector<nn::Parameter*>& params) {
  double sq = 0.0;
  for (const auto* p : params)
    if (!p->frozen) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_gradients(const std::vector<nn::Parameter*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params)
      if (!p->frozen) p->grad *= scale;
  }
  return norm;
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(const std::vector<nn::Parameter*>& params, const GroupRates& rates) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto* p : params) {
    if (p->frozen) continue;
    const double lr = p->group == nn::ParamGroup::backbone ? rates.backbone : rates.head;
    auto& m = m_[p->name];
    auto& v = v_[p->name];
    if (m.size() == 0) {
      m = Matrix::Zero(p->value.rows(), p->value.cols());
      v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    p->value *= 1.0 - lr * weight_decay_;
    m = beta1_ * m + (1.0 - beta1_) * p->grad;
    v = beta2_ * v + (1.0 - beta2_) * p->grad.cwiseAbs2();
    p->value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

fusion::CheckpointExtras AdamW::export_state() const {
  fusion::CheckpointExtras e;
  for (const auto& [name, m] : m_) e.tensors["adam.m." + name] = m;
  for (const auto& [name, v] : v_) e.tensors["adam.v." + name] = v;
  e.meta["adam.step"] = std::to_string(t_);
  return e;
}

void AdamW::import_state(const fusion::CheckpointExtras& extras) {
  m_.clear();
  v_.clear();
  for (const auto& [key, value] : extras.tensors) {
    if (key.starts_with("adam.m.")) m_[key.substr(7)] = value;
    if (key.starts_with("adam.v.")) v_[key.substr(7)] = value;
  }
  const auto it = extras.meta.find("adam.step");
  t_ = it == extras.meta.end() ? 0 : static_cast<std::uint64_t>(text::parse_int(it->second));
}

// ---------------------------------------------------------------------------

namespace {

struct BatchInputs {
  Matrix images;
  std::vector<Matrix> nodes;
};

BatchInputs gather(const std::vector<const Example*>& batch) {
  BatchInputs in;
  in.images.resize(static_cast<Eigen::Index>(batch.size()), fusion::kImageFeatures);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    in.images.row(static_cast<Eigen::Index>(i)) = fusion::image_to_tensor(batch[i]->crop);
    in.nodes.push_back(batch[i]->nodes);
  }
  return in;
}

}  // namespace

StepResult train_step(fusion::FusionNet& model, const std::vector<const Example*>& batch, const TrainConfig& cfg,
                      AdamW& optimizer, const GroupRates& rates, std::uint64_t dropout_seed, std::size_t batch_index) {
  const auto in = gather(batch);
  std::vector<EmotionDistribution> targets;
  for (const auto* e : batch) targets.push_back(smooth_targets(e->target, cfg.smoothing));

  fusion::FusionNet::Tape tape;
  const auto out = model.forward(in.images, in.nodes, {nn::Mode::train, dropout_seed}, &tape);
  LossResult loss;
  try {
    loss = kl_loss(out.logits, targets);
  } catch (const NumericalError& e) {
    throw NumericalError("training batch " + std::to_string(batch_index) + ": " + e.what());
  }
  if (!std::isfinite(loss.loss)) {
    throw NumericalError("training batch " + std::to_string(batch_index) + ": non-finite loss");
  }
  auto params = model.parameters();
  model.zero_grad();
  model.backward(tape, loss.grad);
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) {
    model.zero_grad();
    throw NumericalError("training batch " + std::to_string(batch_index) + ": non-finite gradient norm");
  }
  clip_gradients(params, cfg.clip_norm);
  optimizer.step(params, rates);
  return {loss.loss, norm};
}

MetricsReport compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("compute_metrics: label and prediction counts differ");
  MetricsReport r;
  r.count = truth.size();
  r.empty = truth.empty();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= kNumEmotions || predicted[i] >= kNumEmotions) throw InvalidInputError("class index out of range");
    ++r.confusion[truth[i]][predicted[i]];
  }
  std::size_t correct = 0, present = 0;
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    std::size_t predicted_c = 0, true_c = 0;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
      predicted_c += r.confusion[k][c];
      true_c += r.confusion[c][k];
    }
    const auto tp = static_cast<double>(r.confusion[c][c]);
    correct += r.confusion[c][c];
    auto& m = r.per_class[c];
    m.support = true_c;
    m.absent = predicted_c == 0 && true_c == 0;
    m.precision = predicted_c ? tp / static_cast<double>(predicted_c) : 0.0;
    m.recall = true_c ? tp / static_cast<double>(true_c) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (!m.absent) {
      ++present;
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
    }
  }
  if (present) {
    r.macro_precision /= static_cast<double>(present);
    r.macro_recall /= static_cast<double>(present);
    r.macro_f1 /= static_cast<double>(present);
  }
  r.accuracy = r.empty ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.count);
  return r;
}

std::string MetricsReport::to_text() const {
  std::ostringstream s;
  s << "count = " << count << "\nempty = " << (empty ? "true" : "false")
    << "\naccuracy = " << text::format_fixed(accuracy, 6) << "\nmacro_precision = " << text::format_fixed(macro_precision, 6)
    << "\nmacro_recall = " << text::format_fixed(macro_recall, 6) << "\nmacro_f1 = " << text::format_fixed(macro_f1, 6)
    << "\nmean_loss = " << text::format_fixed(mean_loss, 6) << "\n";
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const auto& m = per_class[c];
    const auto name = std::string(kEmotionNames[c]);
    s << "class." << name << " = precision " << text::format_fixed(m.precision, 6) << " recall "
      << text::format_fixed(m.recall, 6) << " f1 " << text::format_fixed(m.f1, 6) << " support " << m.support
      << (m.absent ? " absent" : "") << "\n";
  }
  for (std::size_t t = 0; t < kNumEmotions; ++t) {
    s << "confusion." << kEmotionNames[t] << " =";
    for (std::size_t p = 0; p < kNumEmotions; ++p) s << " " << confusion[t][p];
    s << "\n";
  }
  return s.str();
}

std::vector<Prediction> predict_all(const fusion::FusionNet& model, const std::vector<const Example*>& data,
                                    int batch_size) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<const Example*> batch(data.begin() + static_cast<std::ptrdiff_t>(start),
                                            data.begin() + static_cast<std::ptrdiff_t>(end));
    const auto in = gather(batch);
    const auto dists = model.predict(in.images, in.nodes);
    for (std::size_t i = 0; i < batch.size(); ++i) out.push_back({batch[i]->frame_id, dists[i]});
  }
  return out;
}

MetricsReport evaluate(const fusion::FusionNet& model, const std::vector<const Example*>& data, const TrainConfig& cfg) {
  const auto preds = predict_all(model, data, cfg.batch_size);
  std::vector<std::size_t> truth, predicted;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    truth.push_back(argmax(data[i]->target.span()));
    predicted.push_back(argmax(preds[i].dist.span()));
    const auto y = smooth_targets(data[i]->target, cfg.smoothing);
    for (std::size_t k = 0; k < kNumEmotions; ++k)
      if (y[k] > 0) loss += y[k] * (std::log(y[k]) - std::log(std::max(preds[i].dist[k], 1e-300)));
  }
  auto report = compute_metrics(truth, predicted);
  report.mean_loss = data.empty() ? 0.0 : loss / static_cast<double>(data.size());
  return report;
}

Split split_by_frame(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(nn::derive_seed(seed, "split"));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n)));
  Split s;
  s.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::string metrics_csv_header() { return "epoch,loss,lr_backbone,lr_head,accuracy,macro_f1"; }

std::string metrics_csv_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + text::format_double(r.loss) + "," + text::format_double(r.lr_backbone) + "," +
         text::format_double(r.lr_head) + "," + text::format_double(r.accuracy) + "," + text::format_double(r.macro_f1);
}

std::vector<EpochRecord> fit(fusion::FusionNet& model, AdamW& optimizer, const std::vector<Example>& data,
                             const Split& split, const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  std::vector<EpochRecord> history;
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<const Example*> out;
    for (auto i : idx) out.push_back(&data.at(i));
    return out;
  };
  const auto val = pick(split.validation.empty() ? split.train : split.validation);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (split.train.size() + batch - 1) / batch;

  for (int epoch = options.start_epoch; epoch < cfg.epochs; ++epoch) {
    auto order = split.train;
    std::mt19937_64 rng(nn::derive_seed(cfg.seed, "epoch" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    GroupRates first_rates = rates_at(epoch, cfg);
    for (std::size_t b = 0; b < batches; ++b) {
      const auto begin = order.begin() + static_cast<std::ptrdiff_t>(b * batch);
      const auto end = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), (b + 1) * batch));
      const auto members = pick({begin, end});
      const auto rates = rates_at(epoch + static_cast<double>(b) / static_cast<double>(batches), cfg);
      const auto step_id = static_cast<std::uint64_t>(epoch) * batches + b;
      const auto r = train_step(model, members, cfg, optimizer, rates,
                                nn::derive_seed(cfg.seed, "step" + std::to_string(step_id)), step_id);
      loss_sum += r.loss * static_cast<double>(members.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = split.train.empty() ? 0.0 : loss_sum / static_cast<double>(split.train.size());
    rec.lr_backbone = first_rates.backbone;
    rec.lr_head = first_rates.head;
    const auto metrics = evaluate(model, val, cfg);
    rec.accuracy = metrics.accuracy;
    rec.macro_f1 = metrics.macro_f1;
    history.push_back(rec);
    if (options.on_epoch_end) options.on_epoch_end(rec, model, optimizer);
  }
  return history;
}

}  // namespace affect::train
