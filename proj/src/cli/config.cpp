#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "affect/cli.hpp"
#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::cli {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const PairingError*>(&e)) return kIntegrity;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const LoadError*>(&e)) return kUsage;
  return kFailure;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string prefix) : node_(node), prefix_(std::move(prefix)) {
    if (!node_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + prefix_ + key + "': " + e.what());
    }
  }

  void read_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end() || it->is_null()) return;
    if (!it->is_number()) throw ConfigError("config key '" + prefix_ + key + "' must be a number");
    out = it->get<double>();
  }

  void read_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    const auto it = node_.find(key);
    return Section(it == node_.end() || it->is_null() ? empty : *it, prefix_ + key + ".");
  }

  void done() const {
    for (const auto& item : node_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + prefix_ + item.key() + "'");
    }
  }

 private:
  std::string label() const { return prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1); }

  const json& node_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json data_json(const DataPaths& d) {
  return {{"frames", d.frames.string()},
          {"fps", d.fps},
          {"detections", d.detections.string()},
          {"validator", d.validator.string()},
          {"scores", {{"fer", d.scores_fer.string()}, {"deepface", d.scores_deepface.string()}}}};
}

json preprocess_json(const PreprocessSettings& p) {
  return {{"blur_threshold", p.gates.blur_threshold},
          {"min_face", p.gates.min_face},
          {"min_confidence", p.gates.min_confidence},
          {"validation_padding", p.gates.validation_padding},
          {"detector", p.detector},
          {"validator", p.validator},
          {"landmarker", p.landmarker}};
}

json softlabel_json(const softlabel::CalibrationConfig& c) {
  return {{"weights", {{"fer_role", c.w_fer}, {"deepface_role", c.w_deepface}}},
          {"gamma", c.gamma},
          {"temperature", c.temperature},
          {"renorm", std::string(softlabel::to_string(c.renorm))}};
}

json model_json(const fusion::FusionConfig& m) {
  return {{"gcn", {{"hidden", m.gcn_hidden}}},
          {"attn", {{"cnn_bottleneck", m.cnn_bottleneck}, {"gcn_bottleneck", m.gcn_bottleneck}}},
          {"head", {{"dropout1", m.dropout1}, {"dropout2", m.dropout2}}},
          {"backbone", {{"kind", m.backbone_kind}, {"frozen_prefix", m.frozen_prefix}}}};
}

json train_json(const train::TrainConfig& t) {
  return {{"lr_backbone", t.lr_backbone},
          {"lr_head", t.lr_head},
          {"weight_decay", t.weight_decay},
          {"clip_norm", t.clip_norm},
          {"smoothing", t.smoothing},
          {"schedule",
           {{"T0", t.schedule.t0},
            {"T_mult", t.schedule.t_mult},
            {"eta_min", t.schedule.eta_min},
            {"eta_min_backbone", optional_json(t.schedule.eta_min_backbone)},
            {"eta_min_head", optional_json(t.schedule.eta_min_head)},
            {"interpolate_within_epoch", t.schedule.interpolate_within_epoch}}},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"val_fraction", t.val_fraction},
          {"adam", {{"beta1", t.beta1}, {"beta2", t.beta2}, {"eps", t.adam_eps}}}};
}

json full_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"workers", c.workers},
          {"run_dir", c.run_dir.string()},
          {"data", data_json(c.data)},
          {"preprocess", preprocess_json(c.preprocess)},
          {"softlabel", softlabel_json(c.softlabel)},
          {"model", model_json(c.model)},
          {"train", train_json(c.train)},
          {"analysis", {{"alpha", c.alpha}}}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section top(root, "");
  top.read("seed", c.seed);
  top.read("workers", c.workers);
  top.read_path("run_dir", c.run_dir, base_dir);
  if (c.run_dir.is_relative()) c.run_dir = base_dir / c.run_dir;

  auto data = top.sub("data");
  data.read_path("frames", c.data.frames, base_dir);
  data.read("fps", c.data.fps);
  data.read_path("detections", c.data.detections, base_dir);
  data.read_path("validator", c.data.validator, base_dir);
  auto scores = data.sub("scores");
  scores.read_path("fer", c.data.scores_fer, base_dir);
  scores.read_path("deepface", c.data.scores_deepface, base_dir);
  scores.done();
  data.done();

  auto pre = top.sub("preprocess");
  pre.read("blur_threshold", c.preprocess.gates.blur_threshold);
  pre.read("min_face", c.preprocess.gates.min_face);
  pre.read("min_confidence", c.preprocess.gates.min_confidence);
  pre.read("validation_padding", c.preprocess.gates.validation_padding);
  pre.read("detector", c.preprocess.detector);
  pre.read("validator", c.preprocess.validator);
  pre.read("landmarker", c.preprocess.landmarker);
  pre.done();

  auto soft = top.sub("softlabel");
  auto weights = soft.sub("weights");
  weights.read("fer_role", c.softlabel.w_fer);
  weights.read("deepface_role", c.softlabel.w_deepface);
  weights.done();
  soft.read("gamma", c.softlabel.gamma);
  soft.read("temperature", c.softlabel.temperature);
  std::string renorm(softlabel::to_string(c.softlabel.renorm));
  soft.read("renorm", renorm);
  try {
    c.softlabel.renorm = softlabel::renorm_from_string(renorm);
  } catch (const Error& e) {
    throw ConfigError(std::string("softlabel.renorm: ") + e.what());
  }
  soft.done();

  auto model = top.sub("model");
  auto gcn = model.sub("gcn");
  gcn.read("hidden", c.model.gcn_hidden);
  gcn.done();
  auto attn = model.sub("attn");
  attn.read("cnn_bottleneck", c.model.cnn_bottleneck);
  attn.read("gcn_bottleneck", c.model.gcn_bottleneck);
  attn.done();
  auto head = model.sub("head");
  head.read("dropout1", c.model.dropout1);
  head.read("dropout2", c.model.dropout2);
  head.done();
  auto backbone = model.sub("backbone");
  backbone.read("kind", c.model.backbone_kind);
  backbone.read("frozen_prefix", c.model.frozen_prefix);
  backbone.done();
  model.done();

  auto tr = top.sub("train");
  tr.read("lr_backbone", c.train.lr_backbone);
  tr.read("lr_head", c.train.lr_head);
  tr.read("weight_decay", c.train.weight_decay);
  tr.read("clip_norm", c.train.clip_norm);
  tr.read("smoothing", c.train.smoothing);
  auto sched = tr.sub("schedule");
  sched.read("T0", c.train.schedule.t0);
  sched.read("T_mult", c.train.schedule.t_mult);
  sched.read("eta_min", c.train.schedule.eta_min);
  sched.read_optional("eta_min_backbone", c.train.schedule.eta_min_backbone);
  sched.read_optional("eta_min_head", c.train.schedule.eta_min_head);
  sched.read("interpolate_within_epoch", c.train.schedule.interpolate_within_epoch);
  sched.done();
  tr.read("epochs", c.train.epochs);
  tr.read("batch_size", c.train.batch_size);
  tr.read("val_fraction", c.train.val_fraction);
  auto adam = tr.sub("adam");
  adam.read("beta1", c.train.beta1);
  adam.read("beta2", c.train.beta2);
  adam.read("eps", c.train.adam_eps);
  adam.done();
  tr.done();

  auto an = top.sub("analysis");
  an.read("alpha", c.alpha);
  an.done();
  top.done();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read config file " + path.string());
  const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(body, path.has_parent_path() ? path.parent_path() : std::filesystem::current_path());
}

void PipelineConfig::finalize() {
  model.seed = seed;
  train.seed = seed;
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (!(data.fps > 0.0)) throw ConfigError("data.fps must be positive");
  const auto& g = preprocess.gates;
  if (!(g.blur_threshold >= 0.0)) throw ConfigError("preprocess.blur_threshold must be non-negative");
  if (g.min_face < 1) throw ConfigError("preprocess.min_face must be at least 1");
  if (!(g.min_confidence >= 0.0 && g.min_confidence <= 1.0)) throw ConfigError("preprocess.min_confidence must lie in [0, 1]");
  if (!(g.validation_padding >= 0.0)) throw ConfigError("preprocess.validation_padding must be non-negative");
  if (preprocess.detector != "table") throw ConfigError("preprocess.detector must be 'table'");
  if (preprocess.validator != "table" && preprocess.validator != "accept" && preprocess.validator != "reject") {
    throw ConfigError("preprocess.validator must be one of table, accept, reject");
  }
  if (preprocess.landmarker != "template") throw ConfigError("preprocess.landmarker must be 'template'");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("analysis.alpha must lie in (0, 1)");
  softlabel.validate();
  model.validate();
  train.validate();
}

std::string PipelineConfig::to_json() const { return full_json(*this).dump(2) + "\n"; }

std::string PipelineConfig::section_json(std::string_view section) const {
  const auto full = full_json(*this);
  json out = {{"seed", seed}};
  if (section == "preprocess") {
    out["data"] = full["data"];
    out["preprocess"] = full["preprocess"];
    out["workers"] = workers;
  } else if (section == "label") {
    out["data"] = full["data"]["scores"];
    out["softlabel"] = full["softlabel"];
  } else if (section == "train") {
    out["model"] = full["model"];
    out["train"] = full["train"];
  } else if (section == "eval") {
    out["train"] = {{"smoothing", train.smoothing}, {"batch_size", train.batch_size}};
  } else if (section == "analyze") {
    out["analysis"] = full["analysis"];
  } else {
    throw Error("unknown config section " + std::string(section));
  }
  return out.dump(2) + "\n";
}

}  // namespace affect::cli
