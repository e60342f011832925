#include <algorithm>
#include <cstdio>
#include <random>

#include "affect/cli.hpp"
#include "affect/image.hpp"
#include "affect/nn.hpp"
#include "affect/text.hpp"

namespace affect::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kClips = 4;
constexpr int kFramesPerClip = 16;
constexpr int kWidth = 192;
constexpr int kHeight = 160;

enum class Defect { none, unreadable, flat, gradient, no_detection, low_confidence, too_small, reject, error };

Defect defect_at(int index) {
  switch (index) {
    case 5: return Defect::unreadable;
    case 10: return Defect::flat;
    case 40: return Defect::gradient;
    case 15:
    case 50: return Defect::no_detection;
    case 20: return Defect::low_confidence;
    case 25: return Defect::too_small;
    case 30: return Defect::reject;
    case 35: return Defect::error;
    default: return Defect::none;
  }
}

// Class each clip leans toward: two positive, two negative.
constexpr std::array<std::size_t, kClips> kLeaning = {3, 5, 4, 0};  // happy, surprise, sad, angry

std::string frame_name(int clip, int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%02d_f%03d", clip + 1, frame);
  return buf;
}

std::string clip_name(int clip) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "child%02d", clip + 1);
  return buf;
}

RgbImage textured_frame(int clip, std::mt19937_64& rng) {
  RgbImage img(kWidth, kHeight);
  std::uniform_int_distribution<int> noise(-45, 45);
  const int base[3] = {90 + 30 * clip, 120, 170 - 25 * clip};
  for (int y = 0; y < kHeight; ++y) {
    for (int x = 0; x < kWidth; ++x) {
      const bool face = (x - 96) * (x - 96) * 49 + (y - 80) * (y - 80) * 36 < 49 * 36 * 40;
      for (int c = 0; c < 3; ++c) {
        const int v = base[c] + (face ? 40 : 0) + noise(rng);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return img;
}

RgbImage smooth_frame(bool gradient) {
  RgbImage img(kWidth, kHeight, 128);
  if (gradient) {
    for (int y = 0; y < kHeight; ++y)
      for (int x = 0; x < kWidth; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(40 + x);
  }
  return img;
}

std::string score_row(const std::string& id, std::size_t leaning, double jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, kNumEmotions> p{};
  for (auto& v : p) v = 0.02 + 0.08 * u(rng);
  p[6] += 0.30 + 0.10 * u(rng);
  p[leaning] += 0.25 + jitter * u(rng);
  double sum = 0.0;
  for (double v : p) sum += v;
  std::string row = id;
  for (double v : p) row += ',' + text::format_double(v / sum);
  return row + '\n';
}

}  // namespace

FixtureSummary make_fixture(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir / "frames");
  std::mt19937_64 rng(nn::derive_seed(seed, "fixture"));
  std::uniform_real_distribution<double> conf(0.90, 0.99);

  std::string manifest = "# 4 clips x 16 frames\n";
  std::string detections = "frame_id,x,y,w,h,confidence\n";
  std::string validator = "frame_id,verdict\n";
  std::string fer = softlabel::scorer_csv_header() + '\n';
  std::string deepface = fer;
  FixtureSummary summary;

  for (int clip = 0; clip < kClips; ++clip) {
    fs::create_directories(dir / "frames" / clip_name(clip));
    for (int f = 0; f < kFramesPerClip; ++f) {
      const int index = clip * kFramesPerClip + f;
      const auto id = frame_name(clip, f);
      const auto rel = clip_name(clip) + "/" + id + ".png";
      const auto path = dir / "frames" / rel;
      manifest += rel + '\n';
      ++summary.frames;

      const Defect d = defect_at(index);
      if (d == Defect::unreadable) {
        text::write_file(path, "not an image\n");
      } else if (d == Defect::flat || d == Defect::gradient) {
        write_png(path, smooth_frame(d == Defect::gradient));
      } else {
        write_png(path, textured_frame(clip, rng));
      }

      const double c = d == Defect::low_confidence ? 0.55 : conf(rng);
      if (d == Defect::too_small) {
        detections += id + ",84,68,24,24," + text::format_fixed(c, 4) + '\n';
      } else if (d != Defect::no_detection) {
        detections += id + ",48,24,96,112," + text::format_fixed(c, 4) + '\n';
      }
      if (d == Defect::reject) validator += id + ",reject\n";
      if (d == Defect::error) validator += id + ",error\n";
      if (d == Defect::none) ++summary.expected_extracted;

      fer += score_row(id, kLeaning[clip], 0.20, rng);
      deepface += score_row(id, kLeaning[clip], 0.10, rng);
    }
  }

  text::write_file(dir / "frames" / "manifest.txt", manifest);
  text::write_file(dir / "detections.csv", detections);
  text::write_file(dir / "validator.csv", validator);
  text::write_file(dir / "scores_fer.csv", fer);
  text::write_file(dir / "scores_deepface.csv", deepface);

  summary.config = dir / "config.json";
  text::write_file(summary.config, "{\n"
                                   "  \"seed\": " + std::to_string(seed) + ",\n"
                                   "  \"run_dir\": \"run\",\n"
                                   "  \"data\": {\n"
                                   "    \"frames\": \"frames/manifest.txt\",\n"
                                   "    \"fps\": 15,\n"
                                   "    \"detections\": \"detections.csv\",\n"
                                   "    \"validator\": \"validator.csv\",\n"
                                   "    \"scores\": {\"fer\": \"scores_fer.csv\", \"deepface\": \"scores_deepface.csv\"}\n"
                                   "  },\n"
                                   "  \"train\": {\"epochs\": 2, \"batch_size\": 16}\n"
                                   "}\n");
  return summary;
}

}  // namespace affect::cli
