#include <CLI11.hpp>
#include <ostream>

#include "affect/cli.hpp"
#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::cli {

namespace {

struct GlobalOptions {
  std::string config;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

struct PreprocessOverrides {
  std::string frames;
  std::optional<double> fps, blur_threshold, min_confidence;
  std::optional<int> min_face;
};

struct TrainOverrides {
  std::optional<int> epochs, batch_size;
  std::string resume;
};

PipelineConfig load_config(const GlobalOptions& g) {
  PipelineConfig cfg;
  if (!g.config.empty()) {
    cfg = PipelineConfig::load(g.config);
  } else {
    cfg = PipelineConfig::from_json("{}", std::filesystem::current_path());
  }
  if (!g.run_dir.empty()) cfg.run_dir = std::filesystem::absolute(g.run_dir);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Child facial affect toolkit: preprocessing, soft labels, fusion training and analysis", "affect"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("-c,--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--run-dir", g.run_dir, "Run directory (overrides run_dir)");
  app.add_option("--seed", g.seed, "Global seed (overrides seed)");
  app.add_option("--workers", g.workers, "Preprocessing worker threads")->check(CLI::PositiveNumber);

  PreprocessOverrides pre;
  auto* preprocess = app.add_subcommand("preprocess", "Gate, crop and landmark every frame");
  preprocess->add_option("--frames", pre.frames, "Frame manifest or directory");
  preprocess->add_option("--fps", pre.fps, "Frame rate used for timestamps");
  preprocess->add_option("--blur-threshold", pre.blur_threshold, "Minimum Laplacian variance");
  preprocess->add_option("--min-face", pre.min_face, "Minimum face side in pixels");
  preprocess->add_option("--min-confidence", pre.min_confidence, "Minimum detector confidence");

  auto* label = app.add_subcommand("label", "Fuse the two scorer outputs into soft labels");

  TrainOverrides tr;
  auto* train = app.add_subcommand("train", "Train the fusion network");
  train->add_option("--epochs", tr.epochs, "Number of epochs");
  train->add_option("--batch-size", tr.batch_size, "Minibatch size");
  train->add_option("--resume", tr.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Predict every labeled frame and score the model");
  auto* analyze = app.add_subcommand("analyze", "Statistics, plots and run summary");
  auto* report = app.add_subcommand("report", "Print the run summary");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in order");

  std::string fixture_dir;
  std::uint64_t fixture_seed = 7;
  auto* fixture = app.add_subcommand("make-fixture", "Write the bundled synthetic dataset");
  fixture->add_option("dir", fixture_dir, "Output directory")->required();
  fixture->add_option("--seed", fixture_seed, "Generator seed");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (fixture->parsed()) {
      const auto s = make_fixture(fixture_dir, fixture_seed);
      out << "wrote " << s.frames << " frames (" << s.expected_extracted << " extractable) and " << s.config.string()
          << '\n';
      return kOk;
    }

    auto cfg = load_config(g);
    if (!pre.frames.empty()) cfg.data.frames = std::filesystem::absolute(pre.frames);
    if (pre.fps) cfg.data.fps = *pre.fps;
    if (pre.blur_threshold) cfg.preprocess.gates.blur_threshold = *pre.blur_threshold;
    if (pre.min_face) cfg.preprocess.gates.min_face = *pre.min_face;
    if (pre.min_confidence) cfg.preprocess.gates.min_confidence = *pre.min_confidence;
    if (tr.epochs) cfg.train.epochs = *tr.epochs;
    if (tr.batch_size) cfg.train.batch_size = *tr.batch_size;
    cfg.finalize();

    TrainOptions train_options;
    if (!tr.resume.empty()) train_options.resume = std::filesystem::absolute(tr.resume);

    if (preprocess->parsed()) {
      out << cmd_preprocess(cfg, out).to_text();
    } else if (label->parsed()) {
      cmd_label(cfg, out);
    } else if (train->parsed()) {
      cmd_train(cfg, train_options, out);
    } else if (eval->parsed()) {
      out << cmd_eval(cfg, out).to_text();
    } else if (analyze->parsed()) {
      cmd_analyze(cfg, out);
    } else if (report->parsed()) {
      out << cmd_report(cfg);
    } else if (pipeline->parsed()) {
      cmd_preprocess(cfg, out);
      cmd_label(cfg, out);
      cmd_train(cfg, train_options, out);
      cmd_eval(cfg, out);
      cmd_analyze(cfg, out);
      out << cmd_report(cfg);
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace affect::cli
