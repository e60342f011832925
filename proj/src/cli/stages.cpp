#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>

#include "affect/backends.hpp"
#include "affect/cli.hpp"
#include "affect/error.hpp"
#include "affect/hashing.hpp"
#include "affect/image.hpp"
#include "affect/text.hpp"

namespace affect::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path stage_dir(const PipelineConfig& cfg, const std::string& stage) { return cfg.run_dir / stage; }

void fresh_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

void require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config key ") + key + " is not set");
  if (!fs::exists(p)) throw LoadError(std::string(key) + ": no such file or directory: " + p.string());
}

// Frames that made it through preprocessing, keyed by id.
struct FrameIndex {
  std::vector<std::string> extracted;
  std::map<std::string, std::string> source_video;
};

FrameIndex read_frame_index(const fs::path& frames_csv) {
  const auto t = text::read_csv(frames_csv);
  const auto id = t.column("frame_id"), video = t.column("source_video"), outcome = t.column("outcome");
  FrameIndex idx;
  for (const auto& r : t.rows) {
    idx.source_video[r[id]] = r[video];
    if (r[outcome] == preprocess::to_string(preprocess::FrameOutcome::extracted)) idx.extracted.push_back(r[id]);
  }
  return idx;
}

// Joins crops, landmarks, soft labels and clip ids into training examples.
std::vector<train::Example> load_examples(const RunManifest& m) {
  const auto frames = read_frame_index(m.require("preprocess", "preprocess/frames.csv"));
  const auto landmark_rows = facegraph::read_landmark_csv(m.require("preprocess", "preprocess/landmarks.csv"));
  const auto labels = softlabel::read_soft_label_csv(m.require("label", "label/soft_labels.csv"));
  std::map<std::string, const facegraph::LandmarkRow*> by_id;
  for (const auto& r : landmark_rows) by_id[r.frame_id] = &r;

  std::vector<train::Example> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    const auto lm = by_id.find(l.frame_id);
    const auto video = frames.source_video.find(l.frame_id);
    if (lm == by_id.end() || video == frames.source_video.end()) {
      throw IntegrityError("soft label for frame '" + l.frame_id + "' has no preprocessed face");
    }
    train::Example e;
    e.frame_id = l.frame_id;
    e.child_id = video->second;
    e.crop = read_image(m.run_dir() / "preprocess" / "crops" / (l.frame_id + ".png"));
    if (e.crop.width != preprocess::kCropSize || e.crop.height != preprocess::kCropSize) {
      throw IntegrityError("crop for frame '" + l.frame_id + "' is not 224x224");
    }
    e.nodes = lm->second->coords;
    e.target = l.dist;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<const train::Example*> pointers(const std::vector<train::Example>& data) {
  std::vector<const train::Example*> out;
  for (const auto& e : data) out.push_back(&e);
  return out;
}

std::string split_csv(const std::vector<train::Example>& data, const train::Split& split) {
  std::vector<std::string> subset(data.size());
  for (auto i : split.train) subset[i] = "train";
  for (auto i : split.validation) subset[i] = "validation";
  std::string out = "frame_id,subset\n";
  for (std::size_t i = 0; i < data.size(); ++i) out += data[i].frame_id + ',' + subset[i] + '\n';
  return out;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03d.ckpt", epoch);
  return buf;
}

json metrics_json(const train::MetricsReport& r) {
  return {{"count", r.count},
          {"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"mean_loss", r.mean_loss}};
}

json read_json(const fs::path& p) {
  try {
    return json::parse(text::read_file(p));
  } catch (const json::exception& e) {
    throw IntegrityError(p.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

preprocess::QualityReport cmd_preprocess(const PipelineConfig& cfg, std::ostream& log) {
  require_path(cfg.data.frames, "data.frames");
  const auto manifest = preprocess::load_manifest(cfg.data.frames, cfg.data.fps);

  preprocess::TableDetector detector;
  if (!cfg.data.detections.empty()) {
    require_path(cfg.data.detections, "data.detections");
    detector = preprocess::TableDetector::from_csv(cfg.data.detections);
  }
  std::unique_ptr<preprocess::FaceValidator> validator;
  if (cfg.preprocess.validator == "accept" || cfg.preprocess.validator == "reject") {
    validator = std::make_unique<preprocess::ConstantValidator>(cfg.preprocess.validator == "accept");
  } else if (cfg.data.validator.empty()) {
    validator = std::make_unique<preprocess::TableValidator>();
  } else {
    require_path(cfg.data.validator, "data.validator");
    validator = std::make_unique<preprocess::TableValidator>(preprocess::TableValidator::from_csv(cfg.data.validator));
  }
  const preprocess::TemplateLandmarker landmarker;

  const auto dir = stage_dir(cfg, "preprocess");
  fresh_dir(dir);
  preprocess::DirectoryWriter writer(dir);
  preprocess::PipelineOptions options{cfg.preprocess.gates, cfg.workers};
  const auto report = preprocess::run_pipeline(manifest, preprocess::file_frame_loader(),
                                               {detector, *validator, landmarker}, options,
                                               [&](const preprocess::FrameResult& r) { writer(r); });
  writer.finish();
  text::write_file(dir / "quality_report.txt", report.to_text());
  text::write_file(dir / "config.json", cfg.to_json());
  RunManifest(cfg.run_dir)
      .record_stage("preprocess", cfg.section_json("preprocess"), cfg.seed,
                    {"preprocess/frames.csv", "preprocess/landmarks.csv", "preprocess/quality_report.txt"});
  log << "preprocess: " << report.faces_extracted << " of " << report.total_found << " frames extracted ("
      << text::format_fixed(100.0 * report.success_rate, 1) << "%)\n";
  return report;
}

std::size_t cmd_label(const PipelineConfig& cfg, std::ostream& log) {
  const RunManifest m(cfg.run_dir);
  const auto frames = read_frame_index(m.require("preprocess", "preprocess/frames.csv"));
  require_path(cfg.data.scores_fer, "data.scores.fer");
  require_path(cfg.data.scores_deepface, "data.scores.deepface");
  const auto index = [](std::vector<softlabel::ScorerOutput> rows, const fs::path& src) {
    std::map<std::string, softlabel::ScorerOutput> out;
    for (auto& r : rows) {
      const auto id = r.frame_id;
      if (!out.emplace(id, std::move(r)).second) throw InvalidInputError(src.string() + ": duplicate frame '" + id + "'");
    }
    return out;
  };
  const auto fer = index(softlabel::read_scorer_csv(cfg.data.scores_fer, cfg.softlabel.fer_role_id), cfg.data.scores_fer);
  const auto df = index(softlabel::read_scorer_csv(cfg.data.scores_deepface, cfg.softlabel.deepface_role_id),
                        cfg.data.scores_deepface);

  std::vector<softlabel::SoftLabel> labels;
  for (const auto& id : frames.extracted) {
    const auto a = fer.find(id);
    const auto b = df.find(id);
    if (a == fer.end()) throw PairingError("frame '" + id + "' has no score in " + cfg.data.scores_fer.string());
    if (b == df.end()) throw PairingError("frame '" + id + "' has no score in " + cfg.data.scores_deepface.string());
    labels.push_back({id, softlabel::calibrate(a->second, b->second, cfg.softlabel)});
  }
  const auto dir = stage_dir(cfg, "label");
  fresh_dir(dir);
  text::write_file(dir / "soft_labels.csv", softlabel::soft_label_csv(labels));
  text::write_file(dir / "config.json", cfg.to_json());
  RunManifest(cfg.run_dir).record_stage("label", cfg.section_json("label"), cfg.seed, {"label/soft_labels.csv"});
  log << "label: " << labels.size() << " soft labels written\n";
  return labels.size();
}

std::vector<train::EpochRecord> cmd_train(const PipelineConfig& cfg, const TrainOptions& options, std::ostream& log) {
  const RunManifest m(cfg.run_dir);
  const auto data = load_examples(m);
  if (data.empty()) throw InvalidInputError("no labeled frames to train on");
  for (const auto& w : cfg.train.warnings()) log << "warning: " << w << '\n';

  const auto dir = stage_dir(cfg, "train");
  fusion::FusionNet model(cfg.model);
  train::AdamW optimizer(cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps, cfg.train.weight_decay);
  train::FitOptions fit_options;
  std::vector<std::string> rows;

  if (options.resume) {
    if (!fs::exists(*options.resume)) throw LoadError("resume checkpoint not found: " + options.resume->string());
    const auto saved = fusion::read_checkpoint_config(*options.resume);
    if (saved.hash() != cfg.model.hash()) {
      throw IntegrityError("resume checkpoint model config " + saved.hash() + " differs from the configured " +
                           cfg.model.hash());
    }
    const auto extras = fusion::load_checkpoint(*options.resume, model);
    optimizer.import_state(extras);
    const auto epoch = extras.meta.find("epoch");
    if (epoch == extras.meta.end()) throw IntegrityError(options.resume->string() + " records no epoch");
    fit_options.start_epoch = static_cast<int>(text::parse_int(epoch->second)) + 1;
    if (fs::exists(dir / "metrics.csv")) {
      const auto t = text::read_csv(dir / "metrics.csv");
      for (const auto& r : t.rows) {
        if (text::parse_int(r[0]) < fit_options.start_epoch) rows.push_back(text::join(r));
      }
    }
    log << "train: resuming after epoch " << epoch->second << '\n';
  } else {
    fresh_dir(dir);
  }
  fs::create_directories(dir / "checkpoints");

  const auto split = train::split_by_frame(data.size(), cfg.train.val_fraction, cfg.seed);
  text::write_file(dir / "split.csv", split_csv(data, split));
  text::write_file(dir / "config.json", cfg.to_json());

  const auto extras_for = [&](int epoch, const train::AdamW& opt) {
    auto extras = opt.export_state();
    extras.meta["epoch"] = std::to_string(epoch);
    extras.meta["seed"] = std::to_string(cfg.seed);
    extras.meta["train_config_hash"] = short_hash(cfg.train.canonical());
    return extras;
  };
  const auto write_metrics = [&] {
    std::string body = train::metrics_csv_header() + "\n";
    for (const auto& r : rows) body += r + "\n";
    text::write_file(dir / "metrics.csv", body);
  };
  int last_epoch = fit_options.start_epoch - 1;
  fit_options.on_epoch_end = [&](const train::EpochRecord& rec, const fusion::FusionNet& net,
                                 const train::AdamW& opt) {
    fusion::save_checkpoint(dir / "checkpoints" / checkpoint_name(rec.epoch), net, extras_for(rec.epoch, opt));
    rows.push_back(train::metrics_csv_row(rec));
    write_metrics();
    last_epoch = rec.epoch;
    log << "train: epoch " << rec.epoch << " loss " << text::format_fixed(rec.loss, 6) << " val accuracy "
        << text::format_fixed(rec.accuracy, 4) << '\n';
  };
  const auto history = train::fit(model, optimizer, data, split, cfg.train, fit_options);
  write_metrics();
  fusion::save_checkpoint(dir / "model.ckpt", model, extras_for(last_epoch, optimizer));

  std::vector<const train::Example*> val;
  for (auto i : split.validation.empty() ? split.train : split.validation) val.push_back(&data[i]);
  const auto report = train::evaluate(model, val, cfg.train);
  text::write_file(dir / "metrics_report.txt", report.to_text());
  RunManifest(cfg.run_dir)
      .record_stage("train", cfg.section_json("train"), cfg.seed,
                    {"train/metrics.csv", "train/split.csv", "train/model.ckpt", "train/metrics_report.txt"});
  return history;
}

train::MetricsReport cmd_eval(const PipelineConfig& cfg, std::ostream& log) {
  const RunManifest m(cfg.run_dir);
  const auto model_path = m.require("train", "train/model.ckpt");
  const auto split_table = text::read_csv(m.require("train", "train/split.csv"));
  const auto data = load_examples(m);

  fusion::FusionNet model(fusion::read_checkpoint_config(model_path));
  fusion::load_checkpoint(model_path, model);
  const auto all = pointers(data);
  const auto preds = train::predict_all(model, all, cfg.train.batch_size);

  analysis::EmotionScoreSeries series;
  series.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) series.push_back({data[i].frame_id, data[i].child_id, preds[i].dist});

  std::map<std::string, std::string> subset;
  for (const auto& r : split_table.rows) subset[r[0]] = r[1];
  std::vector<const train::Example*> val;
  for (const auto* e : all) {
    if (subset.count(e->frame_id) && subset[e->frame_id] == "validation") val.push_back(e);
  }
  const auto val_report = train::evaluate(model, val, cfg.train);
  const auto all_report = train::evaluate(model, all, cfg.train);

  const auto dir = stage_dir(cfg, "eval");
  fresh_dir(dir);
  text::write_file(dir / "predictions.csv", analysis::prediction_csv(series));
  text::write_file(dir / "metrics_report.txt",
                   "[validation]\n" + val_report.to_text() + "\n[all]\n" + all_report.to_text());
  text::write_file(dir / "eval_summary.json",
                   json{{"validation", metrics_json(val_report)}, {"all", metrics_json(all_report)}}.dump(2) + "\n");
  text::write_file(dir / "config.json", cfg.to_json());
  RunManifest(cfg.run_dir)
      .record_stage("eval", cfg.section_json("eval"), cfg.seed,
                    {"eval/predictions.csv", "eval/metrics_report.txt", "eval/eval_summary.json"});
  log << "eval: " << series.size() << " predictions, validation accuracy "
      << text::format_fixed(val_report.accuracy, 4) << '\n';
  return val_report.empty ? all_report : val_report;
}

analysis::AnalysisResults cmd_analyze(const PipelineConfig& cfg, std::ostream& log) {
  const RunManifest m(cfg.run_dir);
  const auto series = analysis::read_prediction_csv(m.require("eval", "eval/predictions.csv"));
  const auto quality =
      preprocess::QualityReport::from_text(text::read_file(m.require("preprocess", "preprocess/quality_report.txt")));
  const auto metrics = text::read_csv(m.require("train", "train/metrics.csv"));
  const auto eval_summary = read_json(m.require("eval", "eval/eval_summary.json"));

  const auto results = analysis::analyze(series, cfg.alpha);
  const auto dir = stage_dir(cfg, "analysis");
  fresh_dir(dir);
  analysis::render_reports(results, dir);
  text::write_file(dir / "config.json", cfg.to_json());

  json summary;
  summary["toolkit_version"] = std::string(kToolkitVersion);
  summary["seed"] = cfg.seed;
  summary["preprocess"] = {{"total_images_found", quality.total_found},
                           {"valid_images", quality.valid_images},
                           {"blurry_images_skipped", quality.blurry_skipped},
                           {"images_with_no_faces", quality.no_face},
                           {"total_faces_extracted", quality.faces_extracted},
                           {"success_rate", quality.success_rate}};
  summary["label"] = {{"soft_labels", series.size()}};
  json train_json = {{"epochs", metrics.rows.size()}};
  if (!metrics.rows.empty()) {
    const auto& last = metrics.rows.back();
    for (std::size_t c = 0; c < metrics.header.size(); ++c) train_json["final"][metrics.header[c]] = text::parse_double(last[c]);
  }
  summary["train"] = train_json;
  summary["eval"] = eval_summary;
  json hist = json::object();
  for (std::size_t c = 0; c < kNumEmotions; ++c) hist[std::string(kEmotionNames[c])] = results.histogram[c];
  json stats = {{"frames", results.frames}, {"label_histogram", hist}};
  if (results.anova) {
    stats["anova"] = {{"F", results.anova->statistic},
                      {"df1", results.anova->df1},
                      {"df2", results.anova->df2},
                      {"p_value", results.anova->p_value},
                      {"undefined", results.anova->undefined}};
  }
  if (results.kruskal) {
    stats["kruskal_wallis"] = {{"H", results.kruskal->statistic},
                               {"df", results.kruskal->df1},
                               {"p_value", results.kruskal->p_value},
                               {"all_ties", results.kruskal->all_ties}};
  }
  if (results.tukey) {
    std::size_t significant = 0;
    for (const auto& p : results.tukey->pairs) significant += p.significant;
    stats["tukey_hsd"] = {{"pairs", results.tukey->pairs.size()},
                          {"significant_pairs", significant},
                          {"q_critical", results.tukey->q_critical},
                          {"alpha", results.tukey->alpha}};
  }
  stats["polarity"] = {{"children", results.polarity.children.size()},
                       {"positive", results.polarity.positive},
                       {"negative", results.polarity.negative},
                       {"excluded", results.polarity.excluded},
                       {"positive_fraction", results.polarity.positive_fraction},
                       {"negative_fraction", results.polarity.negative_fraction}};
  summary["analysis"] = stats;
  text::write_file(cfg.run_dir / "run_summary.json", summary.dump(2) + "\n");
  RunManifest(cfg.run_dir).record_stage("analyze", cfg.section_json("analyze"), cfg.seed, {"run_summary.json"});
  log << "analyze: " << results.frames << " frames, report bundle in " << dir.string() << '\n';
  return results;
}

std::string cmd_report(const PipelineConfig& cfg) {
  const RunManifest m(cfg.run_dir);
  const auto s = read_json(m.require("analyze", "run_summary.json"));
  std::string out = "run " + cfg.run_dir.string() + " (toolkit " + s.value("toolkit_version", "?") + ", seed " +
                    std::to_string(s.value("seed", std::uint64_t{0})) + ")\n";
  const auto& q = s["preprocess"];
  out += "frames found " + q["total_images_found"].dump() + ", valid " + q["valid_images"].dump() + ", blurry " +
         q["blurry_images_skipped"].dump() + ", no face " + q["images_with_no_faces"].dump() + ", extracted " +
         q["total_faces_extracted"].dump() + " (" + text::format_fixed(100.0 * q["success_rate"].get<double>(), 1) +
         "%)\n";
  out += "soft labels " + s["label"]["soft_labels"].dump() + ", training epochs " + s["train"]["epochs"].dump() + "\n";
  for (const char* subset : {"validation", "all"}) {
    const auto& e = s["eval"][subset];
    out += std::string("eval ") + subset + ": n " + e["count"].dump() + ", accuracy " +
           text::format_fixed(e["accuracy"].get<double>(), 4) + ", macro F1 " +
           text::format_fixed(e["macro_f1"].get<double>(), 4) + "\n";
  }
  const auto& a = s["analysis"];
  out += "label histogram:";
  for (auto name : kEmotionNames) out += " " + std::string(name) + "=" + a["label_histogram"][std::string(name)].dump();
  out += "\n";
  if (a.contains("anova")) {
    out += "ANOVA F(" + text::format_double(a["anova"]["df1"].get<double>()) + ", " +
           text::format_double(a["anova"]["df2"].get<double>()) + ") = " +
           text::format_fixed(a["anova"]["F"].get<double>(), 2) + ", p = " + a["anova"]["p_value"].dump() + "\n";
  }
  if (a.contains("kruskal_wallis")) {
    out += "Kruskal-Wallis H(" + text::format_double(a["kruskal_wallis"]["df"].get<double>()) + ") = " +
           text::format_fixed(a["kruskal_wallis"]["H"].get<double>(), 2) + ", p = " +
           a["kruskal_wallis"]["p_value"].dump() + "\n";
  }
  if (a.contains("tukey_hsd")) {
    out += "Tukey HSD: " + a["tukey_hsd"]["significant_pairs"].dump() + " of " + a["tukey_hsd"]["pairs"].dump() +
           " pairs significant\n";
  }
  const auto& p = a["polarity"];
  out += "polarity: " + text::format_fixed(100.0 * p["positive_fraction"].get<double>(), 1) + "% positive, " +
         text::format_fixed(100.0 * p["negative_fraction"].get<double>(), 1) + "% negative over " +
         std::to_string(p["positive"].get<std::size_t>() + p["negative"].get<std::size_t>()) + " children\n";
  text::write_file(cfg.run_dir / "report.txt", out);
  return out;
}

}  // namespace affect::cli
