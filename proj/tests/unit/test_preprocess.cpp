#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "affect/backends.hpp"
#include "affect/error.hpp"
#include "affect/preprocess.hpp"
#include "affect/text.hpp"
#include "temp_dir.hpp"

using namespace affect;
using namespace affect::preprocess;

namespace {

RgbImage noise_image(int w, int h, std::uint64_t seed, int lo = 0, int hi = 255) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(lo, hi);
  RgbImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

RgbImage checkerboard(int n) {
  RgbImage img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x + y) % 2) ? 255 : 0;
  return img;
}

// Direct Laplacian-variance oracle over explicit 3x3 neighbourhoods.
double oracle_blur(const RgbImage& img) {
  auto gray = [&](int x, int y) { return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2); };
  const double k[3][3] = {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}};
  std::vector<double> v;
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x) {
      double s = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) s += k[dy + 1][dx + 1] * gray(x + dx, y + dy);
      v.push_back(s);
    }
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / v.size();
}

struct FixedLandmarker final : LandmarkExtractor {
  facegraph::LandmarkMatrix extract(const RgbImage&, const FrameRecord&) const override {
    facegraph::LandmarkMatrix m(facegraph::kNumLandmarks, 3);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) << i % 17, i % 23, i % 5;
    return m;
  }
};

std::vector<ManifestEntry> synthetic_manifest(std::size_t n) {
  std::vector<ManifestEntry> m;
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry e;
    e.frame_id = "f" + std::to_string(i);
    e.source_video = "child01";
    e.timestamp_s = static_cast<double>(i) / 15.0;
    m.push_back(e);
  }
  return m;
}

}  // namespace

TEST_CASE("blur score: constant image scores zero and is blurry") {
  RgbImage img(32, 24, 128);
  CHECK(blur_score(img) == 0.0);
  CHECK(is_blurry(blur_score(img), GateConfig{}));
}

TEST_CASE("blur score: 6x6 checkerboard matches the convolution oracle and is sharp") {
  const auto img = checkerboard(6);
  const double expected = oracle_blur(img);
  CHECK(expected == doctest::Approx(1020.0 * 1020.0));
  CHECK(blur_score(img) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_FALSE(is_blurry(blur_score(img), GateConfig{}));
}

TEST_CASE("blur score: doubling intensity quadruples the score") {
  auto img = noise_image(20, 16, 7, 0, 127);
  auto doubled = img;
  for (auto& p : doubled.pixels) p = static_cast<std::uint8_t>(2 * p);
  CHECK(blur_score(doubled) == doctest::Approx(4.0 * blur_score(img)).epsilon(1e-12));
  CHECK(blur_score(img) == doctest::Approx(oracle_blur(img)).epsilon(1e-12));
}

TEST_CASE("blur score: images smaller than the kernel are rejected") {
  CHECK_THROWS_AS(blur_score(RgbImage(2, 5)), InvalidInputError);
  CHECK_NOTHROW(blur_score(RgbImage(3, 3)));
}

TEST_CASE("detection gate thresholds") {
  const RgbImage img(200, 200);
  CHECK(gate_detection({{0, 0, 100, 100}, 0.69, "t"}, img) == GateReason::low_confidence);
  CHECK(gate_detection({{0, 0, 29, 40}, 0.95, "t"}, img) == GateReason::too_small);
  CHECK(gate_detection({{0, 0, 40, 29}, 0.95, "t"}, img) == GateReason::too_small);
  CHECK(gate_detection({{0, 0, 30, 30}, 0.70, "t"}, img) == GateReason::accepted);
  // Confidence is checked before size.
  CHECK(gate_detection({{0, 0, 10, 10}, 0.1, "t"}, img) == GateReason::low_confidence);
}

TEST_CASE("padding clamps at image corners; the recorded box stays unpadded") {
  CHECK(padded_region({0, 0, 50, 40}, 0.2, 100, 100) == Rect{0, 0, 60, 48});
  CHECK(padded_region({60, 70, 40, 30}, 0.2, 100, 100) == Rect{52, 64, 48, 36});
  CHECK(padded_region({20, 20, 50, 50}, 0.2, 100, 100) == Rect{10, 10, 70, 70});

  struct Recording final : FaceValidator {
    mutable Rect seen;
    bool contains_face(const RgbImage& region, const FrameRecord&) const override {
      seen = {0, 0, region.width, region.height};
      return true;
    }
  } validator;
  FrameRecord frame{"f", "v", 0.0, noise_image(100, 100, 1)};
  DetectionResult det{{0, 0, 50, 40}, 0.9, "t"};
  CHECK(validate_with_padding(det, frame, validator) == ValidationOutcome::confirmed);
  CHECK(validator.seen == Rect{0, 0, 60, 48});
  CHECK(det.bbox == Rect{0, 0, 50, 40});
}

TEST_CASE("validator pass-through: saved crop equals the unpadded crop") {
  const auto image = noise_image(120, 100, 42);
  TableDetector detector;
  detector.add("f0", {{10, 20, 60, 50}, 0.9, "t"});
  ConstantValidator validator(true);
  FixedLandmarker landmarker;
  const FrameLoader loader = [&](const ManifestEntry&) { return std::optional<RgbImage>(image); };
  const auto r = process_frame(synthetic_manifest(1)[0], loader, {detector, validator, landmarker}, {});
  REQUIRE(r.outcome == FrameOutcome::extracted);
  const auto expected = resize_bilinear(crop(image, {10, 20, 60, 50}), kCropSize, kCropSize);
  CHECK(r.sample->crop.pixels == expected.pixels);
  CHECK(r.sample->crop.width == 224);
  CHECK(r.sample->crop.height == 224);
  CHECK(r.detection->bbox == Rect{10, 20, 60, 50});
}

TEST_CASE("validator always false: nothing extracted, every gated detection counted as no face") {
  const auto manifest = synthetic_manifest(12);
  TableDetector detector;
  for (std::size_t i = 0; i < 12; ++i) detector.add("f" + std::to_string(i), {{5, 5, 40, 40}, 0.9, "t"});
  ConstantValidator validator(false);
  FixedLandmarker landmarker;
  const FrameLoader loader = [](const ManifestEntry& e) {
    return std::optional<RgbImage>(noise_image(64, 64, std::hash<std::string>{}(e.frame_id)));
  };
  const auto report = run_pipeline(manifest, loader, {detector, validator, landmarker}, {}, nullptr);
  CHECK(report.faces_extracted == 0);
  CHECK(report.no_face == 12);
  CHECK(report.outcomes[static_cast<std::size_t>(FrameOutcome::validator_rejected)] == 12);
}

TEST_CASE("validator backend failure counts as no face with a distinct diagnostic") {
  TableDetector detector;
  detector.add("f0", {{5, 5, 40, 40}, 0.9, "t"});
  TableValidator validator;
  validator.set("f0", TableValidator::Verdict::error);
  FixedLandmarker landmarker;
  const FrameLoader loader = [](const ManifestEntry&) { return std::optional<RgbImage>(noise_image(64, 64, 3)); };
  QualityCounter counter;
  const auto r = process_frame(synthetic_manifest(1)[0], loader, {detector, validator, landmarker}, {});
  CHECK(r.outcome == FrameOutcome::validator_error);
  CHECK(r.diagnostic.find("validator") != std::string::npos);
  counter.record(r.outcome);
  CHECK(counter.report().no_face == 1);
}

TEST_CASE("10-frame manifest: exactly four frames pass every gate") {
  // f0 unreadable, f1 blurry, f2 no detection, f3 low confidence, f4 too small,
  // f5 rejected by the validator, f6..f9 pass.
  affect::testing::TempDir tmp;
  const auto manifest = synthetic_manifest(10);
  TableDetector detector;
  for (int i = 1; i < 10; ++i) {
    if (i == 2) continue;
    DetectionResult d{{8, 6, 48, 52}, 0.93, "t"};
    if (i == 3) d.confidence = 0.5;
    if (i == 4) d.bbox = {8, 6, 20, 52};
    detector.add("f" + std::to_string(i), d);
  }
  // A weaker second detection must not win.
  detector.add("f6", {{0, 0, 64, 64}, 0.71, "t"});
  TableValidator validator;
  validator.set("f5", TableValidator::Verdict::reject);
  FixedLandmarker landmarker;
  const FrameLoader loader = [](const ManifestEntry& e) -> std::optional<RgbImage> {
    if (e.frame_id == "f0") return std::nullopt;
    if (e.frame_id == "f1") return RgbImage(64, 64, 90);
    return noise_image(64, 64, std::hash<std::string>{}(e.frame_id));
  };

  DirectoryWriter writer(tmp.path());
  const auto report = run_pipeline(manifest, loader, {detector, validator, landmarker}, {}, std::ref(writer));
  writer.finish();
  CHECK(report.total_found == 10);
  CHECK(report.valid_images == 9);
  CHECK(report.blurry_skipped == 1);
  CHECK(report.no_face == 4);
  CHECK(report.faces_extracted == 4);
  CHECK(report.success_rate == doctest::Approx(0.4));

  const auto landmarks = facegraph::read_landmark_csv(tmp / "landmarks.csv");
  REQUIRE(landmarks.size() == 4);
  CHECK(landmarks[0].frame_id == "f6");
  CHECK(landmarks[3].frame_id == "f9");
  for (int i = 6; i < 10; ++i) CHECK(std::filesystem::exists(tmp / ("crops/f" + std::to_string(i) + ".png")));
  CHECK(text::read_csv(tmp / "frames.csv").rows.size() == 10);

  const auto frames = text::read_csv(tmp / "frames.csv");
  CHECK(frames.rows[6][frames.column("confidence")] == "0.93");
}

TEST_CASE("empty manifest: all counters zero, flagged empty") {
  TableDetector detector;
  ConstantValidator validator(true);
  FixedLandmarker landmarker;
  const auto report = run_pipeline({}, file_frame_loader(), {detector, validator, landmarker}, {}, nullptr);
  CHECK(report.total_found == 0);
  CHECK(report.faces_extracted == 0);
  CHECK(report.success_rate == 0.0);
  CHECK(report.empty_input);
}

TEST_CASE("study-scale counts through the full pipeline with in-memory frames") {
  // 48,891 frames: 7,799 unreadable, 1,600 blurry, 20,170 without a usable face,
  // 19,322 extracted.
  constexpr std::size_t kTotal = 48891, kUnreadable = 7799, kBlurry = 1600, kNoFace = 20170;
  const auto manifest = synthetic_manifest(kTotal);
  TableDetector detector;
  for (std::size_t i = kUnreadable + kBlurry + kNoFace; i < kTotal; ++i) {
    detector.add("f" + std::to_string(i), {{0, 0, 32, 32}, 0.99, "t"});
  }
  ConstantValidator validator(true);
  FixedLandmarker landmarker;
  const auto sharp = noise_image(32, 32, 77);
  const RgbImage flat(32, 32, 60);
  const FrameLoader loader = [&](const ManifestEntry& e) -> std::optional<RgbImage> {
    const auto i = static_cast<std::size_t>(std::stoul(e.frame_id.substr(1)));
    if (i < kUnreadable) return std::nullopt;
    if (i < kUnreadable + kBlurry) return flat;
    return sharp;
  };
  std::size_t streamed = 0;
  const auto report = run_pipeline(manifest, loader, {detector, validator, landmarker}, {},
                                   [&](const FrameResult& r) { streamed += r.sample.has_value(); });
  CHECK(report.total_found == kTotal);
  CHECK(report.blurry_skipped == kBlurry);
  CHECK(report.no_face == kNoFace);
  CHECK(report.faces_extracted == 19322);
  CHECK(streamed == 19322);
  CHECK(std::abs(report.success_rate - 0.395) <= 0.0005);
  CHECK(report.valid_images == report.total_found - report.unreadable());
  CHECK(report.faces_extracted == report.valid_images - report.blurry_skipped - report.no_face);
}

TEST_CASE("determinism and worker-count independence") {
  affect::testing::TempDir tmp;
  const auto manifest = synthetic_manifest(40);
  TableDetector detector;
  for (int i = 0; i < 40; i += 2) detector.add("f" + std::to_string(i), {{4, 4, 48, 48}, 0.8 + 0.004 * i, "t"});
  ConstantValidator validator(true);
  TemplateLandmarker landmarker;
  const FrameLoader loader = [](const ManifestEntry& e) {
    return std::optional<RgbImage>(noise_image(64, 64, std::hash<std::string>{}(e.frame_id)));
  };
  auto run = [&](const std::string& sub, int workers) {
    DirectoryWriter writer(tmp / sub);
    PipelineOptions opts;
    opts.workers = workers;
    auto rep = run_pipeline(manifest, loader, {detector, validator, landmarker}, opts, std::ref(writer));
    writer.finish();
    return std::pair{rep, text::read_file(tmp / (sub + "/landmarks.csv")) + text::read_file(tmp / (sub + "/frames.csv"))};
  };
  const auto [r1, csv1] = run("a", 1);
  const auto [r2, csv2] = run("b", 1);
  const auto [r3, csv3] = run("c", 3);
  CHECK(csv1 == csv2);
  CHECK(csv1 == csv3);
  CHECK(r1.outcomes == r3.outcomes);
  CHECK(r1.faces_extracted == 20);
}

TEST_CASE("quality report text round trip") {
  QualityCounter c;
  c.record(FrameOutcome::unreadable, 5);
  c.record(FrameOutcome::blurry, 3);
  c.record(FrameOutcome::validator_error, 2);
  c.record(FrameOutcome::extracted, 7);
  const auto r = c.report(12.5);
  const auto back = QualityReport::from_text(r.to_text());
  CHECK(back.total_found == 17);
  CHECK(back.valid_images == 12);
  CHECK(back.no_face == 2);
  CHECK(back.outcomes == r.outcomes);
  CHECK(r.to_text().find("success_rate_percent = 41.2") != std::string::npos);
}

TEST_CASE("manifest loading: file lists, directory walks and duplicate ids") {
  affect::testing::TempDir tmp;
  std::filesystem::create_directories(tmp / "frames/childB");
  std::filesystem::create_directories(tmp / "frames/childA");
  for (auto p : {"frames/childB/b_001.png", "frames/childA/a_002.png", "frames/childA/a_001.png"}) {
    write_png(tmp / p, noise_image(8, 8, 1));
  }
  const auto walked = load_manifest(tmp / "frames", 15.0);
  REQUIRE(walked.size() == 3);
  CHECK(walked[0].frame_id == "a_001");
  CHECK(walked[1].frame_id == "a_002");
  CHECK(walked[1].timestamp_s == doctest::Approx(1.0 / 15.0));
  CHECK(walked[2].source_video == "childB");

  std::ofstream(tmp / "manifest.txt") << "# frames\nframes/childB/b_001.png\nframes/childA/missing.png\n";
  const auto listed = load_manifest(tmp / "manifest.txt");
  REQUIRE(listed.size() == 2);
  CHECK(file_frame_loader()(listed[0]).has_value());
  CHECK_FALSE(file_frame_loader()(listed[1]).has_value());

  std::ofstream(tmp / "dup.txt") << "frames/childA/a_001.png\nframes/childA/a_001.png\n";
  CHECK_THROWS_AS(load_manifest(tmp / "dup.txt"), InvalidInputError);
  CHECK_THROWS_AS(load_manifest(tmp / "absent.txt"), LoadError);
}

TEST_CASE("template landmarker is deterministic and normalizes cleanly") {
  TemplateLandmarker lm;
  FrameRecord frame{"f", "v", 0.0, {}};
  const auto crop_a = noise_image(224, 224, 5);
  const auto a1 = lm.extract(crop_a, frame);
  const auto a2 = lm.extract(crop_a, frame);
  CHECK(a1 == a2);
  CHECK(a1.allFinite());
  const auto norm = facegraph::normalize_landmarks(a1);
  CHECK_FALSE(norm.any_degenerate());
  const auto b = lm.extract(RgbImage(224, 224, 250), frame);
  CHECK((a1 - b).cwiseAbs().maxCoeff() > 1.0);
}
