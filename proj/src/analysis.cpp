#include "affect/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "affect/error.hpp"
#include "affect/special.hpp"
#include "affect/text.hpp"

namespace affect::analysis {

std::string prediction_csv_header() {
  std::string h = "frame_id,child_id";
  for (auto name : kEmotionNames) (h += ',') += name;
  return h;
}

std::string prediction_csv(const EmotionScoreSeries& series) {
  std::string out = prediction_csv_header() + "\n";
  for (const auto& row : series) {
    out += row.frame_id;
    (out += ',') += row.child_id;
    for (double v : row.scores.values()) (out += ',') += text::format_double(v);
    out += '\n';
  }
  return out;
}

EmotionScoreSeries read_prediction_csv(const std::filesystem::path& path) {
  const auto t = text::read_csv(path);
  const auto frame = t.column("frame_id");
  const auto child = t.column("child_id");
  std::array<std::size_t, kNumEmotions> cols{};
  for (std::size_t c = 0; c < kNumEmotions; ++c) cols[c] = t.column(kEmotionNames[c]);
  EmotionScoreSeries out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    EmotionDistribution::Array p{};
    for (std::size_t c = 0; c < kNumEmotions; ++c) p[c] = text::parse_double(row[cols[c]]);
    if (!EmotionDistribution::is_valid(p)) {
      throw InvalidInputError(path.string() + ": frame '" + row[frame] + "' is not a probability distribution");
    }
    out.push_back({row[frame], row[child], EmotionDistribution(p)});
  }
  return out;
}

std::vector<std::vector<double>> class_columns(const EmotionScoreSeries& series) {
  std::vector<std::vector<double>> cols(kNumEmotions);
  for (auto& c : cols) c.reserve(series.size());
  for (const auto& row : series)
    for (std::size_t c = 0; c < kNumEmotions; ++c) cols[c].push_back(row.scores[c]);
  return cols;
}

// ---------------------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidInputError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ColumnStats column_stats(std::span<const double> values) {
  ColumnStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.n);
  if (s.n == 1) {
    s.single_observation = true;
  } else {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  return s;
}

std::string DescriptiveStats::to_csv() const {
  std::string out = "emotion,n,mean,std,min,q1,median,q3,max,single_observation\n";
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const auto& s = classes[c];
    out += std::string(kEmotionNames[c]) + ',' + std::to_string(s.n);
    for (double v : {s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max}) (out += ',') += text::format_double(v);
    out += s.single_observation ? ",1\n" : ",0\n";
  }
  return out;
}

DescriptiveStats descriptive_stats(const EmotionScoreSeries& series) {
  DescriptiveStats d;
  d.empty = series.empty();
  const auto cols = class_columns(series);
  for (std::size_t c = 0; c < kNumEmotions; ++c) d.classes[c] = column_stats(cols[c]);
  return d;
}

LabelHistogram label_histogram(const EmotionScoreSeries& series) {
  LabelHistogram h{};
  for (const auto& row : series) ++h[argmax(row.scores.span())];
  return h;
}

std::string label_histogram_csv(const LabelHistogram& histogram) {
  std::string out = "emotion,count\n";
  for (std::size_t c = 0; c < kNumEmotions; ++c) out += std::string(kEmotionNames[c]) + ',' + std::to_string(histogram[c]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------

Polarity polarity_of(EmotionClass c) {
  switch (c) {
    case EmotionClass::happy:
    case EmotionClass::surprise:
      return Polarity::positive;
    case EmotionClass::neutral:
      return Polarity::none;
    default:
      return Polarity::negative;
  }
}

std::string_view polarity_name(Polarity p) {
  switch (p) {
    case Polarity::positive:
      return "positive";
    case Polarity::negative:
      return "negative";
    default:
      return "none";
  }
}

std::vector<ChildDominance> child_dominance(const EmotionScoreSeries& series) {
  std::map<std::string, ChildDominance> by_child;
  for (const auto& row : series) {
    auto& d = by_child[row.child_id];
    d.child_id = row.child_id;
    ++d.frames;
    for (std::size_t c = 0; c < kNumEmotions; ++c) d.mass[c] += row.scores[c];
  }
  std::vector<ChildDominance> out;
  out.reserve(by_child.size());
  constexpr std::size_t kNeutral = index_of(EmotionClass::neutral);
  for (auto& [id, d] : by_child) {
    const std::span<const double> affective(d.mass.data(), kNeutral);
    if (std::accumulate(affective.begin(), affective.end(), 0.0) > 0.0) {
      d.dominant = static_cast<EmotionClass>(argmax(affective));
    }
    out.push_back(std::move(d));
  }
  return out;
}

PolaritySummary polarity_summary(const std::vector<ChildDominance>& children) {
  PolaritySummary s;
  s.children = children;
  for (const auto& c : children) {
    if (!c.dominant || polarity_of(*c.dominant) == Polarity::none) {
      ++s.excluded;
    } else if (polarity_of(*c.dominant) == Polarity::positive) {
      ++s.positive;
    } else {
      ++s.negative;
    }
  }
  const std::size_t included = s.positive + s.negative;
  if (included > 0) {
    s.positive_fraction = static_cast<double>(s.positive) / static_cast<double>(included);
    s.negative_fraction = static_cast<double>(s.negative) / static_cast<double>(included);
  }
  return s;
}

std::string PolaritySummary::to_csv() const {
  std::string out = "child_id,frames,dominant,polarity,excluded\n";
  for (const auto& c : children) {
    out += c.child_id + ',' + std::to_string(c.frames) + ',';
    if (c.dominant) {
      out += std::string(name_of(*c.dominant)) + ',' + std::string(polarity_name(polarity_of(*c.dominant))) + ",0\n";
    } else {
      out += ",none,1\n";
    }
  }
  return out;
}

std::string PolaritySummary::pie_csv() const {
  std::string out = "slice,children,fraction\n";
  out += "positive," + std::to_string(positive) + ',' + text::format_double(positive_fraction) + '\n';
  out += "negative," + std::to_string(negative) + ',' + text::format_double(negative_fraction) + '\n';
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct GroupMoments {
  std::vector<double> n;
  std::vector<double> mean;
  double total = 0.0;
  double ss_within = 0.0;
};

GroupMoments check_and_summarize(const std::vector<std::vector<double>>& groups, const char* test) {
  if (groups.size() < 2) throw InvalidInputError(std::string(test) + " needs at least two groups");
  GroupMoments m;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& xs = groups[g];
    if (xs.empty()) throw InvalidInputError(std::string(test) + ": group " + std::to_string(g) + " is empty");
    double sum = 0.0;
    for (double v : xs) {
      if (!std::isfinite(v)) throw InvalidInputError(std::string(test) + ": non-finite observation in group " + std::to_string(g));
      sum += v;
    }
    const double mean = sum / static_cast<double>(xs.size());
    for (double v : xs) m.ss_within += (v - mean) * (v - mean);
    m.n.push_back(static_cast<double>(xs.size()));
    m.mean.push_back(mean);
    m.total += static_cast<double>(xs.size());
  }
  if (m.total - static_cast<double>(groups.size()) < 2.0) {
    throw InvalidInputError(std::string(test) + " needs at least two more observations than groups");
  }
  return m;
}

}  // namespace

StatTestResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  const auto m = check_and_summarize(groups, "anova_oneway");
  const double k = static_cast<double>(groups.size());
  double grand = 0.0;
  for (std::size_t g = 0; g < m.n.size(); ++g) grand += m.n[g] * m.mean[g];
  grand /= m.total;
  double ss_between = 0.0;
  if (std::adjacent_find(m.mean.begin(), m.mean.end(), std::not_equal_to<>()) != m.mean.end()) {
    for (std::size_t g = 0; g < m.n.size(); ++g) ss_between += m.n[g] * (m.mean[g] - grand) * (m.mean[g] - grand);
  }

  StatTestResult r;
  r.test_name = "anova_oneway";
  r.df1 = k - 1.0;
  r.df2 = m.total - k;
  if (m.ss_within == 0.0) {
    if (ss_between == 0.0) {
      r.undefined = true;
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.infinite = true;
      r.statistic = std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.statistic = (ss_between / r.df1) / (m.ss_within / r.df2);
  r.p_value = stats::f_survival(r.statistic, r.df1, r.df2);
  return r;
}

StatTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  const auto m = check_and_summarize(groups, "kruskal_wallis");
  struct Obs {
    double value;
    std::size_t group;
  };
  std::vector<Obs> pooled;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (double v : groups[g]) pooled.push_back({v, g});
  std::sort(pooled.begin(), pooled.end(), [](const Obs& a, const Obs& b) { return a.value < b.value; });

  const double n = m.total;
  std::vector<double> rank_sum(groups.size(), 0.0);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    const double t = static_cast<double>(j - i);
    const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t r = i; r < j; ++r) rank_sum[pooled[r].group] += mid_rank;
    tie_term += t * t * t - t;
    i = j;
  }

  StatTestResult r;
  r.test_name = "kruskal_wallis";
  r.df1 = static_cast<double>(groups.size()) - 1.0;
  const double correction = 1.0 - tie_term / (n * n * n - n);
  if (correction <= 0.0) {
    r.all_ties = true;
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  const double center = 0.5 * (n + 1.0);
  double h = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double d = rank_sum[g] / m.n[g] - center;
    h += m.n[g] * d * d;
  }
  r.statistic = 12.0 / (n * (n + 1.0)) * h / correction;
  r.p_value = stats::chi_square_survival(r.statistic, r.df1);
  return r;
}

std::string StatTestResult::to_text() const {
  std::string out;
  out += "test = " + test_name + "\n";
  out += "statistic = " + text::format_double(statistic) + "\n";
  out += "df1 = " + text::format_double(df1) + "\n";
  if (df2 > 0.0) out += "df2 = " + text::format_double(df2) + "\n";
  out += "p_value = " + text::format_double(p_value) + "\n";
  out += std::string("undefined = ") + (undefined ? "true" : "false") + "\n";
  out += std::string("infinite = ") + (infinite ? "true" : "false") + "\n";
  out += std::string("all_ties = ") + (all_ties ? "true" : "false") + "\n";
  return out;
}

TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInputError("tukey_hsd: alpha must lie in (0, 1)");
  const auto m = check_and_summarize(groups, "tukey_hsd");
  const int k = static_cast<int>(groups.size());
  TukeyResult t;
  t.alpha = alpha;
  t.groups = groups.size();
  t.df = m.total - k;
  t.mse = m.ss_within / t.df;
  t.zero_variance = m.ss_within == 0.0;
  t.q_critical = stats::studentized_range_quantile(1.0 - alpha, k, t.df);
  for (std::size_t a = 0; a + 1 < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      PairwiseComparison p;
      p.group_a = a;
      p.group_b = b;
      p.mean_diff = m.mean[a] - m.mean[b];
      p.std_error = std::sqrt(0.5 * t.mse * (1.0 / m.n[a] + 1.0 / m.n[b]));
      if (p.mean_diff == 0.0) {
        p.q = 0.0;
      } else if (p.std_error == 0.0) {
        p.q = std::numeric_limits<double>::infinity();
      } else {
        p.q = std::abs(p.mean_diff) / p.std_error;
      }
      p.p_value = std::clamp(1.0 - stats::studentized_range_cdf(p.q, k, t.df), 0.0, 1.0);
      p.lower = p.mean_diff - t.q_critical * p.std_error;
      p.upper = p.mean_diff + t.q_critical * p.std_error;
      p.significant = p.p_value < alpha;
      t.pairs.push_back(p);
    }
  }
  return t;
}

std::string TukeyResult::to_csv(const std::vector<std::string>& names) const {
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : std::to_string(i); };
  std::string out = "group_a,group_b,mean_diff,std_error,q,q_critical,p_value,lower,upper,significant\n";
  for (const auto& p : pairs) {
    out += name(p.group_a) + ',' + name(p.group_b);
    for (double v : {p.mean_diff, p.std_error, p.q, q_critical, p.p_value, p.lower, p.upper}) {
      (out += ',') += text::format_double(v);
    }
    out += p.significant ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace affect::analysis
