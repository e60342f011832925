#include "affect/preprocess.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::preprocess {

std::vector<double> grayscale(const RgbImage& image) {
  std::vector<double> gray(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const auto* px = &image.pixels[3 * i];
    gray[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
  }
  return gray;
}

double blur_score(const RgbImage& image) {
  if (image.width < 3 || image.height < 3) {
    throw InvalidInputError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                            " is smaller than the 3x3 Laplacian kernel");
  }
  const auto gray = grayscale(image);
  const int w = image.width;
  const auto g = [&](int x, int y) { return gray[static_cast<std::size_t>(y) * w + x]; };

  // Two-pass variance over the (w-2)x(h-2) valid region.
  std::vector<double> lap;
  lap.reserve(static_cast<std::size_t>(w - 2) * (image.height - 2));
  for (int y = 1; y < image.height - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      lap.push_back(g(x, y - 1) + g(x - 1, y) + g(x + 1, y) + g(x, y + 1) - 4.0 * g(x, y));
    }
  }
  double mean = 0.0;
  for (double v : lap) mean += v;
  mean /= static_cast<double>(lap.size());
  double var = 0.0;
  for (double v : lap) var += (v - mean) * (v - mean);
  return var / static_cast<double>(lap.size());
}

std::string_view to_string(GateReason r) {
  switch (r) {
    case GateReason::accepted: return "accepted";
    case GateReason::low_confidence: return "low_confidence";
    case GateReason::too_small: return "too_small";
  }
  return "unknown";
}

GateReason gate_detection(const DetectionResult& det, const RgbImage& /*image*/, const GateConfig& cfg) {
  if (det.confidence < cfg.min_confidence) return GateReason::low_confidence;
  if (det.bbox.w < cfg.min_face || det.bbox.h < cfg.min_face) return GateReason::too_small;
  return GateReason::accepted;
}

Rect padded_region(const Rect& bbox, double fraction, int image_width, int image_height) {
  const int pad_x = static_cast<int>(std::lround(fraction * bbox.w));
  const int pad_y = static_cast<int>(std::lround(fraction * bbox.h));
  return clamp_rect({bbox.x - pad_x, bbox.y - pad_y, bbox.w + 2 * pad_x, bbox.h + 2 * pad_y}, image_width,
                    image_height);
}

ValidationOutcome validate_with_padding(const DetectionResult& det, const FrameRecord& frame,
                                        const FaceValidator& validator, double fraction) {
  const Rect region = padded_region(det.bbox, fraction, frame.image.width, frame.image.height);
  try {
    const RgbImage padded = crop(frame.image, region);
    return validator.contains_face(padded, frame) ? ValidationOutcome::confirmed : ValidationOutcome::rejected;
  } catch (const std::exception&) {
    return ValidationOutcome::backend_error;
  }
}

std::string_view to_string(FrameOutcome o) {
  switch (o) {
    case FrameOutcome::unreadable: return "unreadable";
    case FrameOutcome::blurry: return "blurry";
    case FrameOutcome::no_detection: return "no_detection";
    case FrameOutcome::low_confidence: return "low_confidence";
    case FrameOutcome::too_small: return "too_small";
    case FrameOutcome::validator_rejected: return "validator_rejected";
    case FrameOutcome::validator_error: return "validator_error";
    case FrameOutcome::landmark_failure: return "landmark_failure";
    case FrameOutcome::extracted: return "extracted";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

void QualityCounter::record(FrameOutcome outcome, std::size_t count) {
  counts_[static_cast<std::size_t>(outcome)] += count;
}

void QualityCounter::merge(const QualityCounter& other) {
  for (std::size_t i = 0; i < kNumFrameOutcomes; ++i) counts_[i] += other.counts_[i];
}

QualityReport QualityCounter::report(double processing_time_s) const {
  QualityReport r;
  r.outcomes = counts_;
  const auto n = [&](FrameOutcome o) { return counts_[static_cast<std::size_t>(o)]; };
  for (auto c : counts_) r.total_found += c;
  r.valid_images = r.total_found - n(FrameOutcome::unreadable);
  r.blurry_skipped = n(FrameOutcome::blurry);
  r.faces_extracted = n(FrameOutcome::extracted);
  r.no_face = r.valid_images - r.blurry_skipped - r.faces_extracted;
  r.empty_input = r.total_found == 0;
  r.success_rate = r.empty_input ? 0.0 : static_cast<double>(r.faces_extracted) / static_cast<double>(r.total_found);
  r.processing_time_s = processing_time_s;
  return r;
}

std::string QualityReport::to_text() const {
  std::string out;
  const auto line = [&](std::string_view key, const std::string& value) {
    out.append(key).append(" = ").append(value).append("\n");
  };
  line("total_images_found", std::to_string(total_found));
  line("valid_images", std::to_string(valid_images));
  line("blurry_images_skipped", std::to_string(blurry_skipped));
  line("images_with_no_faces", std::to_string(no_face));
  line("total_faces_extracted", std::to_string(faces_extracted));
  line("success_rate", text::format_fixed(success_rate, 6));
  line("success_rate_percent", text::format_fixed(100.0 * success_rate, 1));
  line("processing_time_seconds", text::format_fixed(processing_time_s, 2));
  line("empty_input", empty_input ? "true" : "false");
  for (std::size_t i = 0; i < kNumFrameOutcomes; ++i) {
    line("outcome." + std::string(to_string(static_cast<FrameOutcome>(i))), std::to_string(outcomes[i]));
  }
  return out;
}

QualityReport QualityReport::from_text(std::string_view contents) {
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t start = 0;
  while (start < contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    const auto line = text::trim(contents.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw LoadError("malformed quality report line '" + std::string(line) + "'");
    kv[std::string(text::trim(line.substr(0, eq)))] = std::string(text::trim(line.substr(eq + 1)));
  }
  const auto get = [&](std::string_view key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw LoadError("quality report is missing '" + std::string(key) + "'");
    return it->second;
  };
  const auto count = [&](std::string_view key) { return static_cast<std::size_t>(text::parse_int(get(key))); };
  QualityReport r;
  r.total_found = count("total_images_found");
  r.valid_images = count("valid_images");
  r.blurry_skipped = count("blurry_images_skipped");
  r.no_face = count("images_with_no_faces");
  r.faces_extracted = count("total_faces_extracted");
  r.success_rate = text::parse_double(get("success_rate"));
  r.processing_time_s = text::parse_double(get("processing_time_seconds"));
  r.empty_input = get("empty_input") == "true";
  for (std::size_t i = 0; i < kNumFrameOutcomes; ++i) {
    r.outcomes[i] = count("outcome." + std::string(to_string(static_cast<FrameOutcome>(i))));
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest_or_dir, double fps) {
  namespace fs = std::filesystem;
  if (!(fps > 0.0)) throw InvalidInputError("fps must be positive");
  std::vector<fs::path> paths;
  if (fs::is_directory(manifest_or_dir)) {
    for (const auto& e : fs::recursive_directory_iterator(manifest_or_dir)) {
      if (e.is_regular_file() && is_image_file(e.path())) paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
  } else {
    std::ifstream in(manifest_or_dir);
    if (!in) throw LoadError("cannot open manifest " + manifest_or_dir.string());
    const auto base = manifest_or_dir.parent_path();
    std::string line;
    while (std::getline(in, line)) {
      const auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      fs::path p(t);
      paths.push_back(p.is_absolute() ? p : base / p);
    }
  }

  std::vector<ManifestEntry> entries;
  entries.reserve(paths.size());
  std::set<std::string> seen;
  std::map<std::string, std::size_t> per_video;
  for (auto& p : paths) {
    ManifestEntry e;
    e.frame_id = p.stem().string();
    e.source_video = p.parent_path().filename().string();
    e.timestamp_s = static_cast<double>(per_video[e.source_video]++) / fps;
    if (!seen.insert(e.frame_id).second) {
      throw InvalidInputError("duplicate frame id '" + e.frame_id + "' in manifest " + manifest_or_dir.string());
    }
    e.path = std::move(p);
    entries.push_back(std::move(e));
  }
  return entries;
}

FrameLoader file_frame_loader() {
  return [](const ManifestEntry& e) -> std::optional<RgbImage> {
    try {
      return read_image(e.path);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
}

FrameResult process_frame(const ManifestEntry& entry, const FrameLoader& loader, const Backends& backends,
                          const GateConfig& gates) {
  FrameResult r;
  r.entry = entry;

  std::optional<RgbImage> image;
  try {
    image = loader(entry);
  } catch (const std::exception& e) {
    r.diagnostic = e.what();
  }
  if (!image || image->empty()) {
    r.outcome = FrameOutcome::unreadable;
    if (r.diagnostic.empty()) r.diagnostic = "unreadable frame " + entry.path.string();
    return r;
  }
  FrameRecord frame{entry.frame_id, entry.source_video, entry.timestamp_s, std::move(*image)};

  try {
    r.blur = blur_score(frame.image);
  } catch (const InvalidInputError& e) {
    r.outcome = FrameOutcome::blurry;
    r.diagnostic = e.what();
    return r;
  }
  if (is_blurry(r.blur, gates)) {
    r.outcome = FrameOutcome::blurry;
    return r;
  }

  std::vector<DetectionResult> detections;
  try {
    detections = backends.detector.detect(frame);
  } catch (const std::exception& e) {
    r.outcome = FrameOutcome::no_detection;
    r.diagnostic = std::string("detector failure: ") + e.what();
    return r;
  }
  // Single-subject footage: keep the most confident detection (first wins ties).
  const DetectionResult* best = nullptr;
  for (const auto& d : detections) {
    if (!best || d.confidence > best->confidence) best = &d;
  }
  if (!best) {
    r.outcome = FrameOutcome::no_detection;
    return r;
  }
  DetectionResult det = *best;
  det.bbox = clamp_rect(det.bbox, frame.image.width, frame.image.height);
  r.detection = det;
  if (det.bbox.w <= 0 || det.bbox.h <= 0) {
    r.outcome = FrameOutcome::no_detection;
    r.diagnostic = "detection lies outside the frame";
    return r;
  }

  switch (gate_detection(det, frame.image, gates)) {
    case GateReason::low_confidence: r.outcome = FrameOutcome::low_confidence; return r;
    case GateReason::too_small: r.outcome = FrameOutcome::too_small; return r;
    case GateReason::accepted: break;
  }

  switch (validate_with_padding(det, frame, backends.validator, gates.validation_padding)) {
    case ValidationOutcome::rejected: r.outcome = FrameOutcome::validator_rejected; return r;
    case ValidationOutcome::backend_error:
      r.outcome = FrameOutcome::validator_error;
      r.diagnostic = "validator backend failure";
      return r;
    case ValidationOutcome::confirmed: break;
  }

  try {
    FaceSample sample;
    sample.frame_id = entry.frame_id;
    sample.crop = resize_bilinear(crop(frame.image, det.bbox), kCropSize, kCropSize);
    const auto raw = backends.landmarker.extract(sample.crop, frame);
    sample.graph = {facegraph::normalize_landmarks(raw), facegraph::build_topology()};
    r.sample = std::move(sample);
  } catch (const std::exception& e) {
    r.outcome = FrameOutcome::landmark_failure;
    r.diagnostic = std::string("landmark extraction failed: ") + e.what();
    return r;
  }
  r.outcome = FrameOutcome::extracted;
  return r;
}

QualityReport run_pipeline(const std::vector<ManifestEntry>& manifest, const FrameLoader& loader,
                           const Backends& backends, const PipelineOptions& options,
                           const std::function<void(const FrameResult&)>& sink) {
  const auto started = std::chrono::steady_clock::now();
  // Topology load errors must surface before any frame is counted.
  (void)facegraph::build_topology();

  QualityCounter counter;
  const std::size_t workers = static_cast<std::size_t>(std::max(1, options.workers));
  const std::size_t block = std::max<std::size_t>(64, workers * 16);
  std::vector<FrameResult> results;

  for (std::size_t begin = 0; begin < manifest.size(); begin += block) {
    const std::size_t end = std::min(manifest.size(), begin + block);
    results.assign(end - begin, FrameResult{});
    if (workers == 1) {
      for (std::size_t i = begin; i < end; ++i) results[i - begin] = process_frame(manifest[i], loader, backends, options.gates);
    } else {
      std::atomic<std::size_t> next{begin};
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < end; i = next++) {
            results[i - begin] = process_frame(manifest[i], loader, backends, options.gates);
          }
        });
      }
    }
    for (const auto& r : results) {
      counter.record(r.outcome);
      if (sink) sink(r);
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return counter.report(elapsed);
}

// ---------------------------------------------------------------------------

std::string frames_csv_header() {
  return "frame_id,source_video,timestamp_s,outcome,blur_score,bbox_x,bbox_y,bbox_w,bbox_h,confidence";
}

DirectoryWriter::DirectoryWriter(std::filesystem::path out_dir) : dir_(std::move(out_dir)) {
  std::filesystem::create_directories(dir_ / "crops");
  landmarks_.open(dir_ / "landmarks.csv", std::ios::trunc);
  frames_.open(dir_ / "frames.csv", std::ios::trunc);
  if (!landmarks_ || !frames_) throw Error("cannot create preprocessing outputs in " + dir_.string());
  landmarks_ << facegraph::landmark_csv_header() << '\n';
  frames_ << frames_csv_header() << '\n';
}

void DirectoryWriter::operator()(const FrameResult& r) {
  frames_ << r.entry.frame_id << ',' << r.entry.source_video << ',' << text::format_double(r.entry.timestamp_s) << ','
          << to_string(r.outcome) << ',' << text::format_double(r.blur);
  if (r.detection) {
    const auto& b = r.detection->bbox;
    frames_ << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ',' << text::format_double(r.detection->confidence);
  } else {
    frames_ << ",,,,,";
  }
  frames_ << '\n';
  if (r.sample) {
    write_png(dir_ / "crops" / (r.sample->frame_id + ".png"), r.sample->crop);
    landmarks_ << facegraph::landmark_csv_row(r.sample->frame_id, 0, r.sample->graph.landmarks) << '\n';
  }
}

void DirectoryWriter::finish() {
  landmarks_.flush();
  frames_.flush();
  if (!landmarks_ || !frames_) throw Error("failed writing preprocessing outputs in " + dir_.string());
}

}  // namespace affect::preprocess
