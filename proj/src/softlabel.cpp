#include "affect/softlabel.hpp"

#include <cmath>

#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::softlabel {

namespace {
constexpr std::size_t kNeutral = index_of(EmotionClass::neutral);
}

Renorm renorm_from_string(std::string_view s) {
  if (s == "softmax") return Renorm::softmax;
  if (s == "sum") return Renorm::sum;
  throw ConfigError("renorm must be 'softmax' or 'sum', got '" + std::string(s) + "'");
}

std::string_view to_string(Renorm r) { return r == Renorm::softmax ? "softmax" : "sum"; }

void CalibrationConfig::validate() const {
  if (!(w_fer >= 0.0) || !(w_deepface >= 0.0)) throw ConfigError("scorer weights must be non-negative");
  if (std::abs(w_fer + w_deepface - 1.0) > 1e-9) {
    throw ConfigError("scorer weights must sum to 1, got " + text::format_double(w_fer + w_deepface));
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
  if (fer_role_id == deepface_role_id) throw ConfigError("the two scorer roles need distinct ids");
}

EmotionDistribution fuse(const ScorerOutput& a, const ScorerOutput& b, const CalibrationConfig& cfg) {
  cfg.validate();
  if (a.frame_id != b.frame_id) {
    throw PairingError("cannot fuse scores of different frames: '" + a.frame_id + "' vs '" + b.frame_id + "'");
  }
  const ScorerOutput* fer = nullptr;
  const ScorerOutput* deepface = nullptr;
  for (const auto* s : {&a, &b}) {
    if (s->scorer_id == cfg.fer_role_id && !fer) fer = s;
    else if (s->scorer_id == cfg.deepface_role_id && !deepface) deepface = s;
  }
  if (!fer || !deepface) {
    throw ConfigError("scorer ids '" + a.scorer_id + "' and '" + b.scorer_id + "' do not match the roles '" +
                      cfg.fer_role_id + "' and '" + cfg.deepface_role_id + "'");
  }
  EmotionDistribution::Array out;
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    out[i] = cfg.w_fer * fer->dist[i] + cfg.w_deepface * deepface->dist[i];
  }
  return EmotionDistribution(out, 1e-9);
}

namespace {

EmotionDistribution renormalize(const EmotionDistribution::Array& v, Renorm renorm) {
  EmotionDistribution::Array out;
  double total = 0.0;
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    out[i] = renorm == Renorm::softmax ? std::exp(v[i]) : v[i];
    total += out[i];
  }
  for (auto& x : out) x /= total;
  return EmotionDistribution(out, 1e-9);
}

EmotionDistribution::Array penalize(const EmotionDistribution& p, double gamma) {
  auto v = p.values();
  v[kNeutral] *= gamma;
  return v;
}

}  // namespace

EmotionDistribution neutral_penalty(const EmotionDistribution& p, double gamma, Renorm renorm) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  return renormalize(penalize(p, gamma), renorm);
}

EmotionDistribution temperature_sharpen(const EmotionDistribution& p, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  EmotionDistribution::Array out;
  double total = 0.0;
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    out[i] = std::pow(p[i], 1.0 / temperature);
    total += out[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("temperature sharpening produced a zero vector");
  for (auto& x : out) x /= total;
  return EmotionDistribution(out, 1e-9);
}

CalibrationTrace calibrate_traced(const ScorerOutput& a, const ScorerOutput& b, const CalibrationConfig& cfg) {
  auto fused = fuse(a, b, cfg);
  auto penalized = penalize(fused, cfg.gamma);
  auto renormalized = renormalize(penalized, cfg.renorm);
  auto sharpened = temperature_sharpen(renormalized, cfg.temperature);
  return {fused, penalized, renormalized, sharpened};
}

EmotionDistribution calibrate(const ScorerOutput& a, const ScorerOutput& b, const CalibrationConfig& cfg) {
  return calibrate_traced(a, b, cfg).sharpened;
}

// ---------------------------------------------------------------------------

std::string scorer_csv_header() {
  std::string h = "frame_id";
  for (auto name : kEmotionNames) (h += ',') += name;
  return h;
}

std::string soft_label_csv_header() { return scorer_csv_header() + ",calib_version"; }

namespace {

EmotionDistribution::Array read_probabilities(const text::CsvTable& t, const std::vector<std::string>& row) {
  EmotionDistribution::Array p;
  for (std::size_t i = 0; i < kNumEmotions; ++i) p[i] = text::parse_double(row[t.column(kEmotionNames[i])]);
  return p;
}

}  // namespace

std::vector<ScorerOutput> read_scorer_csv(const std::filesystem::path& path, const std::string& scorer_id) {
  const auto t = text::read_csv(path);
  const auto id = t.column("frame_id");
  std::vector<ScorerOutput> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    auto p = read_probabilities(t, row);
    double total = 0.0;
    for (double v : p) total += v;
    if (!EmotionDistribution::is_valid(p, 1e-3)) {
      throw InvalidInputError(path.string() + ": frame '" + row[id] + "' is not a probability distribution");
    }
    for (auto& v : p) v /= total;
    out.push_back({scorer_id, EmotionDistribution(p), row[id]});
  }
  return out;
}

std::string soft_label_csv(const std::vector<SoftLabel>& labels) {
  std::string out = soft_label_csv_header() + "\n";
  for (const auto& l : labels) {
    out += l.frame_id;
    for (double v : l.dist.values()) (out += ',') += text::format_double(v);
    (out += ',') += kCalibrationVersion;
    out += '\n';
  }
  return out;
}

std::vector<SoftLabel> read_soft_label_csv(const std::filesystem::path& path) {
  const auto t = text::read_csv(path);
  if (text::join(t.header) != soft_label_csv_header()) {
    throw LoadError(path.string() + ": header does not match the soft-label schema");
  }
  std::vector<SoftLabel> out;
  out.reserve(t.rows.size());
  const auto version = t.column("calib_version");
  for (const auto& row : t.rows) {
    if (row[version] != kCalibrationVersion) {
      throw LoadError(path.string() + ": unsupported calibration version '" + row[version] + "'");
    }
    out.push_back({row[0], EmotionDistribution(read_probabilities(t, row))});
  }
  return out;
}

}  // namespace affect::softlabel
