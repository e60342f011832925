#include "affect/backends.hpp"

#include <cmath>
#include <numbers>

#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::preprocess {

TableDetector::TableDetector(std::map<std::string, std::vector<DetectionResult>> table) : table_(std::move(table)) {}

TableDetector TableDetector::from_csv(const std::filesystem::path& path) {
  const auto t = text::read_csv(path);
  const auto id = t.column("frame_id"), x = t.column("x"), y = t.column("y"), w = t.column("w"), h = t.column("h"),
             conf = t.column("confidence");
  TableDetector det;
  for (const auto& r : t.rows) {
    DetectionResult d;
    d.bbox = {static_cast<int>(text::parse_int(r[x])), static_cast<int>(text::parse_int(r[y])),
              static_cast<int>(text::parse_int(r[w])), static_cast<int>(text::parse_int(r[h]))};
    d.confidence = text::parse_double(r[conf]);
    d.detector_id = "table";
    det.add(r[id], d);
  }
  return det;
}

void TableDetector::add(const std::string& frame_id, DetectionResult det) { table_[frame_id].push_back(std::move(det)); }

std::vector<DetectionResult> TableDetector::detect(const FrameRecord& frame) const {
  auto it = table_.find(frame.frame_id);
  return it == table_.end() ? std::vector<DetectionResult>{} : it->second;
}

TableValidator TableValidator::from_csv(const std::filesystem::path& path, Verdict fallback) {
  const auto t = text::read_csv(path);
  const auto id = t.column("frame_id"), verdict = t.column("verdict");
  TableValidator v(fallback);
  for (const auto& r : t.rows) {
    const auto& s = r[verdict];
    if (s == "accept") v.set(r[id], Verdict::accept);
    else if (s == "reject") v.set(r[id], Verdict::reject);
    else if (s == "error") v.set(r[id], Verdict::error);
    else throw LoadError(path.string() + ": unknown verdict '" + s + "'");
  }
  return v;
}

bool TableValidator::contains_face(const RgbImage&, const FrameRecord& frame) const {
  auto it = table_.find(frame.frame_id);
  const Verdict v = it == table_.end() ? fallback_ : it->second;
  if (v == Verdict::error) throw Error("validator backend failed on frame " + frame.frame_id);
  return v == Verdict::accept;
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry, z;
};

// Contour groups in the order of the topology data file.
const std::vector<std::pair<std::vector<std::size_t>, Ellipse>>& contour_template() {
  static const std::vector<std::pair<std::vector<std::size_t>, Ellipse>> groups = {
      {{10, 338, 297, 332, 284, 251, 389, 356, 454, 323, 361, 288, 397, 365, 379, 378, 400, 377,
        152, 148, 176, 149, 150, 136, 172, 58, 132, 93, 234, 127, 162, 21, 54, 103, 67, 109},
       {0.50, 0.50, 0.42, 0.48, 0.05}},
      {{46, 53, 52, 65, 55, 107, 66, 105, 63, 70}, {0.33, 0.31, 0.10, 0.025, -0.04}},
      {{276, 283, 282, 295, 285, 336, 296, 334, 293, 300}, {0.67, 0.31, 0.10, 0.025, -0.04}},
      {{33, 7, 163, 144, 145, 153, 154, 155, 133, 173, 157, 158, 159, 160, 161, 246}, {0.34, 0.40, 0.07, 0.03, -0.03}},
      {{263, 249, 390, 373, 374, 380, 381, 382, 362, 398, 384, 385, 386, 387, 388, 466}, {0.66, 0.40, 0.07, 0.03, -0.03}},
      {{61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291, 409, 270, 269, 267, 0, 37, 39, 40, 185},
       {0.50, 0.72, 0.13, 0.05, -0.06}},
      {{78, 95, 88, 178, 87, 14, 317, 402, 318, 324, 308, 415, 310, 311, 312, 13, 82, 81, 80, 191},
       {0.50, 0.72, 0.09, 0.02, -0.05}},
  };
  return groups;
}

// Mean luma of the crop rows in [y0, y1) as a fraction of full scale.
double band_brightness(const RgbImage& img, double y0, double y1, double x0 = 0.0, double x1 = 1.0) {
  const int r0 = static_cast<int>(y0 * img.height), r1 = std::max(r0 + 1, static_cast<int>(y1 * img.height));
  const int c0 = static_cast<int>(x0 * img.width), c1 = std::max(c0 + 1, static_cast<int>(x1 * img.width));
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = r0; y < std::min(r1, img.height); ++y) {
    for (int x = c0; x < std::min(c1, img.width); ++x) {
      sum += 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      ++n;
    }
  }
  return n ? sum / (255.0 * static_cast<double>(n)) : 0.0;
}

}  // namespace

facegraph::LandmarkMatrix TemplateLandmarker::extract(const RgbImage& crop, const FrameRecord&) const {
  if (crop.empty()) throw InvalidInputError("empty crop");
  using facegraph::kNumLandmarks;
  facegraph::LandmarkMatrix pts(kNumLandmarks, 3);

  // Dome for the vertices that belong to no contour: golden-angle spiral.
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    const double r = std::sqrt((static_cast<double>(k) + 0.5) / kNumLandmarks);
    const double theta = golden * static_cast<double>(k);
    pts.row(static_cast<Eigen::Index>(k)) << 0.5 + 0.36 * r * std::cos(theta), 0.5 + 0.42 * r * std::sin(theta),
        -0.12 * (1.0 - r * r);
  }

  const double upper = band_brightness(crop, 0.20, 0.45);
  const double middle = band_brightness(crop, 0.35, 0.50);
  const double lower = band_brightness(crop, 0.60, 0.85);
  const double tilt = band_brightness(crop, 0.0, 1.0, 0.5, 1.0) - band_brightness(crop, 0.0, 1.0, 0.0, 0.5);

  const auto& groups = contour_template();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Ellipse e = groups[g].second;
    if (g == 1 || g == 2) e.cy -= 0.06 * (upper - 0.5);       // brows
    if (g == 3 || g == 4) e.ry *= 0.5 + middle;               // eye opening
    if (g == 5 || g == 6) e.ry *= 0.4 + 1.6 * lower;          // mouth opening
    if (g == 5 || g == 6) e.rx *= 0.9 + 0.3 * (upper - lower);  // mouth width
    const auto& nodes = groups[g].first;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(nodes.size());
      pts.row(static_cast<Eigen::Index>(nodes[k])) << e.cx + e.rx * std::cos(a), e.cy + e.ry * std::sin(a), e.z;
    }
  }
  pts.row(static_cast<Eigen::Index>(facegraph::kNoseTipIndex)) << 0.5, 0.56, -0.16;

  // Head roll from the left/right brightness imbalance, about the crop centre.
  const double roll = 0.3 * tilt;
  const double c = std::cos(roll), s = std::sin(roll);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double x = pts(i, 0) - 0.5, y = pts(i, 1) - 0.5;
    pts(i, 0) = (0.5 + c * x - s * y) * crop.width;
    pts(i, 1) = (0.5 + s * x + c * y) * crop.height;
    pts(i, 2) *= crop.width;
  }
  return pts;
}

}  // namespace affect::preprocess
