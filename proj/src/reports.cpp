#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "affect/analysis.hpp"
#include "affect/error.hpp"
#include "affect/text.hpp"

namespace affect::analysis {

double silverman_bandwidth(std::span<const double> values) {
  const auto s = column_stats(values);
  if (s.n < 2 || s.std == 0.0) return 0.0;
  const double iqr_scale = (s.q3 - s.q1) / 1.34;
  const double spread = iqr_scale > 0.0 ? std::min(s.std, iqr_scale) : s.std;
  return 0.9 * spread * std::pow(static_cast<double>(s.n), -0.2);
}

KdeCurve gaussian_kde(std::span<const double> values, std::size_t grid_points) {
  if (grid_points < 2) throw InvalidInputError("KDE grid needs at least two points");
  KdeCurve k;
  k.n = values.size();
  if (values.empty()) {
    k.degenerate = true;
    return k;
  }
  k.bandwidth = silverman_bandwidth(values);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  if (k.bandwidth == 0.0) {
    k.degenerate = true;
    k.location = *lo_it;
    return k;
  }
  const double h = k.bandwidth;
  const double lo = *lo_it - 4.0 * h, hi = *hi_it + 4.0 * h;
  const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  k.x.resize(grid_points);
  k.density.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    double sum = 0.0;
    for (double v : values) {
      const double u = (x - v) / h;
      sum += std::exp(-0.5 * u * u);
    }
    k.x[i] = x;
    k.density[i] = sum * norm;
  }
  return k;
}

BoxSummary box_summary(std::span<const double> values) {
  BoxSummary b;
  if (values.empty()) return b;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  b.q1 = quantile_sorted(sorted, 0.25);
  b.median = quantile_sorted(sorted, 0.5);
  b.q3 = quantile_sorted(sorted, 0.75);
  const double iqr = b.q3 - b.q1;
  const double fence_lo = b.q1 - 1.5 * iqr, fence_hi = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : sorted) {
    if (v < fence_lo || v > fence_hi) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  return b;
}

AnalysisResults analyze(const EmotionScoreSeries& series, double alpha) {
  AnalysisResults r;
  r.frames = series.size();
  r.descriptive = descriptive_stats(series);
  r.histogram = label_histogram(series);
  r.polarity = polarity_summary(child_dominance(series));
  const auto cols = class_columns(series);
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    r.kde[c] = gaussian_kde(cols[c]);
    r.box[c] = box_summary(cols[c]);
  }
  if (series.size() >= 2) {
    r.anova = anova_oneway(cols);
    r.kruskal = kruskal_wallis(cols);
    r.tukey = tukey_hsd(cols, alpha);
  }
  return r;
}

std::string kde_csv(const std::array<KdeCurve, kNumEmotions>& curves) {
  std::string out = "emotion,kind,bandwidth,x,density\n";
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const auto& k = curves[c];
    const std::string name(kEmotionNames[c]);
    if (k.degenerate) {
      if (k.n > 0) out += name + ",marker,0," + text::format_double(k.location) + ",\n";
      continue;
    }
    const std::string bw = text::format_double(k.bandwidth);
    for (std::size_t i = 0; i < k.x.size(); ++i) {
      out += name + ",curve," + bw + ',' + text::format_double(k.x[i]) + ',' + text::format_double(k.density[i]) + '\n';
    }
  }
  return out;
}

std::string box_csv(const std::array<BoxSummary, kNumEmotions>& boxes) {
  std::string out = "emotion,whisker_low,q1,median,q3,whisker_high,outliers\n";
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const auto& b = boxes[c];
    out += std::string(kEmotionNames[c]);
    for (double v : {b.whisker_low, b.q1, b.median, b.q3, b.whisker_high}) (out += ',') += text::format_double(v);
    (out += ',') += std::to_string(b.outliers.size());
    out += '\n';
  }
  return out;
}

namespace {

constexpr std::array<const char*, kNumEmotions> kColours = {"#d62728", "#8c564b", "#9467bd", "#2ca02c",
                                                            "#1f77b4", "#ff7f0e", "#7f7f7f"};

std::string num(double v) { return text::format_fixed(v, 2); }

// Tiny SVG writer; the charts only need rectangles, lines, paths and text.
class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
             "\" fill=\"" + fill + "\" stroke=\"#333\" stroke-width=\"0.5\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
             "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) body_ += num(x) + ',' + num(y) + ' ';
    body_ += "\"/>\n";
  }
  void path(const std::string& d, const std::string& fill) {
    body_ += "<path d=\"" + d + "\" fill=\"" + fill + "\" stroke=\"#fff\" stroke-width=\"1\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" + fill + "\"/>\n";
  }
  void label(double x, double y, const std::string& s, const char* anchor = "middle", int size = 11) {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + s + "</text>\n";
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" + num(h_) +
           "\" viewBox=\"0 0 " + num(w_) + ' ' + num(h_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n" +
           body_ + "</svg>\n";
  }

 private:
  double w_, h_;
  std::string body_;
};

constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

void axes(Svg& svg, const std::string& title, double y_max, const std::string& y_fmt_label) {
  svg.label(kW / 2, 24, title, "middle", 14);
  svg.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, "#333");
  svg.line(kLeft, kTop, kLeft, kH - kBottom, "#333");
  for (int t = 0; t <= 4; ++t) {
    const double y = kH - kBottom - (kH - kTop - kBottom) * t / 4.0;
    svg.line(kLeft - 4, y, kLeft, y, "#333");
    svg.label(kLeft - 6, y + 4, text::format_fixed(y_max * t / 4.0, y_max >= 100 ? 0 : 2), "end", 10);
  }
  svg.label(14, kH / 2, y_fmt_label, "middle", 11);
}

std::string bar_svg(const LabelHistogram& h) {
  Svg svg(kW, kH);
  const double peak = std::max<double>(1.0, static_cast<double>(*std::max_element(h.begin(), h.end())));
  axes(svg, "Predicted label counts", peak, "frames");
  const double slot = (kW - kLeft - kRight) / kNumEmotions;
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const double bh = (kH - kTop - kBottom) * static_cast<double>(h[c]) / peak;
    const double x = kLeft + slot * static_cast<double>(c) + slot * 0.15;
    svg.rect(x, kH - kBottom - bh, slot * 0.7, bh, kColours[c]);
    svg.label(x + slot * 0.35, kH - kBottom - bh - 4, std::to_string(h[c]), "middle", 10);
    svg.label(x + slot * 0.35, kH - kBottom + 16, std::string(kEmotionNames[c]));
  }
  return svg.str();
}

std::string kde_svg(const std::array<KdeCurve, kNumEmotions>& curves) {
  Svg svg(kW, kH);
  double x_lo = 0.0, x_hi = 1.0, y_hi = 1e-12;
  for (const auto& k : curves) {
    if (k.degenerate) continue;
    x_lo = std::min(x_lo, k.x.front());
    x_hi = std::max(x_hi, k.x.back());
    y_hi = std::max(y_hi, *std::max_element(k.density.begin(), k.density.end()));
  }
  axes(svg, "Score density per emotion", y_hi, "density");
  const auto px = [&](double x) { return kLeft + (kW - kLeft - kRight) * (x - x_lo) / (x_hi - x_lo); };
  const auto py = [&](double y) { return kH - kBottom - (kH - kTop - kBottom) * y / y_hi; };
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const auto& k = curves[c];
    if (k.degenerate) {
      if (k.n > 0) svg.line(px(k.location), kTop, px(k.location), kH - kBottom, kColours[c], 2.0);
    } else {
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < k.x.size(); ++i) pts.emplace_back(px(k.x[i]), py(k.density[i]));
      svg.polyline(pts, kColours[c]);
    }
    svg.rect(kW - kRight - 90, kTop + 14.0 * c, 10, 10, kColours[c]);
    svg.label(kW - kRight - 75, kTop + 14.0 * c + 9, std::string(kEmotionNames[c]), "start", 10);
  }
  for (int t = 0; t <= 4; ++t) {
    const double x = x_lo + (x_hi - x_lo) * t / 4.0;
    svg.label(px(x), kH - kBottom + 16, text::format_fixed(x, 2), "middle", 10);
  }
  return svg.str();
}

std::string box_svg(const std::array<BoxSummary, kNumEmotions>& boxes) {
  Svg svg(kW, kH);
  double y_hi = 1.0;
  for (const auto& b : boxes) {
    y_hi = std::max(y_hi, b.whisker_high);
    for (double o : b.outliers) y_hi = std::max(y_hi, o);
  }
  axes(svg, "Score distribution per emotion", y_hi, "score");
  const auto py = [&](double y) { return kH - kBottom - (kH - kTop - kBottom) * y / y_hi; };
  const double slot = (kW - kLeft - kRight) / kNumEmotions;
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const auto& b = boxes[c];
    const double cx = kLeft + slot * (static_cast<double>(c) + 0.5), half = slot * 0.3;
    svg.line(cx, py(b.whisker_low), cx, py(b.q1), "#333");
    svg.line(cx, py(b.q3), cx, py(b.whisker_high), "#333");
    svg.line(cx - half / 2, py(b.whisker_low), cx + half / 2, py(b.whisker_low), "#333");
    svg.line(cx - half / 2, py(b.whisker_high), cx + half / 2, py(b.whisker_high), "#333");
    svg.rect(cx - half, py(b.q3), 2 * half, std::max(0.5, py(b.q1) - py(b.q3)), kColours[c]);
    svg.line(cx - half, py(b.median), cx + half, py(b.median), "#000", 2.0);
    for (double o : b.outliers) svg.circle(cx, py(o), 1.5, "#333");
    svg.label(cx, kH - kBottom + 16, std::string(kEmotionNames[c]));
  }
  return svg.str();
}

std::string pie_svg(const PolaritySummary& p) {
  Svg svg(kH, kH);
  svg.label(kH / 2, 24, "Dominant affect polarity per child", "middle", 14);
  const double cx = kH / 2, cy = kH / 2 + 10, r = 140;
  const double included = static_cast<double>(p.positive + p.negative);
  if (included == 0.0) {
    svg.circle(cx, cy, r, "#ddd");
    svg.label(cx, cy, "no children with affective mass");
    return svg.str();
  }
  const std::array<std::pair<double, const char*>, 2> slices = {{{p.positive_fraction, "#4daf4a"},
                                                                 {p.negative_fraction, "#fb8072"}}};
  const std::array<std::string, 2> names = {"positive", "negative"};
  double start = -std::numbers::pi / 2;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const double frac = slices[i].first;
    if (frac <= 0.0) continue;
    if (frac >= 1.0) {
      svg.circle(cx, cy, r, slices[i].second);
    } else {
      const double end = start + 2 * std::numbers::pi * frac;
      const std::string d = "M" + num(cx) + ',' + num(cy) + " L" + num(cx + r * std::cos(start)) + ',' +
                            num(cy + r * std::sin(start)) + " A" + num(r) + ',' + num(r) + " 0 " +
                            (frac > 0.5 ? "1" : "0") + ",1 " + num(cx + r * std::cos(end)) + ',' +
                            num(cy + r * std::sin(end)) + " Z";
      svg.path(d, slices[i].second);
    }
    const double mid = start + std::numbers::pi * frac;
    svg.label(cx + 0.6 * r * std::cos(mid), cy + 0.6 * r * std::sin(mid),
              names[i] + " " + text::format_fixed(100.0 * frac, 1) + "%");
    start += 2 * std::numbers::pi * frac;
  }
  return svg.str();
}

std::string run_summary_text(const AnalysisResults& r) {
  std::string out = "frames = " + std::to_string(r.frames) + "\n";
  out += "children = " + std::to_string(r.polarity.children.size()) + "\n";
  out += "positive_fraction = " + text::format_double(r.polarity.positive_fraction) + "\n";
  out += "negative_fraction = " + text::format_double(r.polarity.negative_fraction) + "\n";
  out += "excluded_children = " + std::to_string(r.polarity.excluded) + "\n";
  return out;
}

}  // namespace

std::vector<std::filesystem::path> render_reports(const AnalysisResults& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto emit = [&](const std::string& name, const std::string& body) {
    text::write_file(dir / name, body);
    written.push_back(dir / name);
  };
  std::vector<std::string> names(kEmotionNames.begin(), kEmotionNames.end());

  emit("emotion_descriptive_stats.csv", r.descriptive.to_csv());
  emit("label_histogram.csv", label_histogram_csv(r.histogram));
  emit("label_histogram.svg", bar_svg(r.histogram));
  emit("kde.csv", kde_csv(r.kde));
  emit("kde.svg", kde_svg(r.kde));
  emit("boxplot.csv", box_csv(r.box));
  emit("boxplot.svg", box_svg(r.box));
  emit("polarity.csv", r.polarity.to_csv());
  emit("polarity_pie.csv", r.polarity.pie_csv());
  emit("polarity_pie.svg", pie_svg(r.polarity));
  const std::string skipped = "skipped = too few observations\n";
  emit("anova.txt", r.anova ? r.anova->to_text() : skipped);
  emit("kruskal.txt", r.kruskal ? r.kruskal->to_text() : skipped);
  emit("tukey.csv", r.tukey ? r.tukey->to_csv(names) : std::string());
  emit("analysis_summary.txt", run_summary_text(r));
  return written;
}

}  // namespace affect::analysis
