#pragma once

// Reference statistics written independently of src/: raw-sum formulas,
// O(N^2) rank counting and Boost.Math distributions/quadrature.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <vector>

namespace affect::testing {

struct OracleTest {
  double statistic;
  double p;
};

inline OracleTest oracle_anova(const std::vector<std::vector<double>>& g) {
  double n = 0, sum = 0, sumsq = 0, between_raw = 0;
  for (const auto& xs : g) {
    double s = 0;
    for (double v : xs) {
      s += v;
      sumsq += v * v;
    }
    between_raw += s * s / xs.size();
    sum += s;
    n += xs.size();
  }
  const double k = g.size();
  const double ssb = between_raw - sum * sum / n;
  const double ssw = sumsq - between_raw;
  const double f = (ssb / (k - 1)) / (ssw / (n - k));
  const boost::math::fisher_f dist(k - 1, n - k);
  return {f, boost::math::cdf(boost::math::complement(dist, f))};
}

inline OracleTest oracle_kruskal(const std::vector<std::vector<double>>& g) {
  std::vector<double> all;
  for (const auto& xs : g) all.insert(all.end(), xs.begin(), xs.end());
  const double n = all.size();
  auto rank = [&](double v) {
    double less = 0, equal = 0;
    for (double w : all) {
      less += w < v;
      equal += w == v;
    }
    return less + (equal + 1) / 2;
  };
  double term = 0;
  for (const auto& xs : g) {
    double r = 0;
    for (double v : xs) r += rank(v);
    term += r * r / xs.size();
  }
  double ties = 0;
  for (double v : all) {
    double t = 0;
    for (double w : all) t += w == v;
    ties += (t * t - 1);  // summed t times per tie block gives t^3 - t
  }
  const double h = (12 / (n * (n + 1)) * term - 3 * (n + 1)) / (1 - ties / (n * n * n - n));
  const boost::math::chi_squared dist(g.size() - 1.0);
  return {h, boost::math::cdf(boost::math::complement(dist, h))};
}

/// P(Q <= q) for the studentized range, integrating over u ~ chi-square(df).
inline double oracle_ptukey(double q, int k, double df) {
  auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  auto range_cdf = [&](double w) {
    auto inner = [&](double x) {
      const double d = phi(x) - phi(x - w);
      return d <= 0 ? 0.0 : std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI) * std::pow(d, k - 1);
    };
    return k * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(inner, -10.0, 10.0 + w, 6, 1e-12);
  };
  const boost::math::chi_squared chi(df);
  const double lo = boost::math::quantile(chi, 1e-14);
  const double hi = boost::math::quantile(boost::math::complement(chi, 1e-14));
  auto outer = [&](double u) { return boost::math::pdf(chi, u) * range_cdf(q * std::sqrt(u / df)); };
  if (df < 3) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(outer, lo, hi, 1e-11);
  }
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(outer, lo, hi, 8, 1e-11);
}

struct OraclePair {
  double q;
  double p;
};

inline std::vector<OraclePair> oracle_tukey(const std::vector<std::vector<double>>& g) {
  const int k = g.size();
  std::vector<double> mean, size;
  double ssw = 0, n = 0;
  for (const auto& xs : g) {
    double s = 0;
    for (double v : xs) s += v;
    const double m = s / xs.size();
    for (double v : xs) ssw += (v - m) * (v - m);
    mean.push_back(m);
    size.push_back(xs.size());
    n += xs.size();
  }
  const double df = n - k, mse = ssw / df;
  std::vector<OraclePair> out;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      const double q = std::abs(mean[a] - mean[b]) / std::sqrt(mse * (1 / size[a] + 1 / size[b]) / 2);
      out.push_back({q, 1 - oracle_ptukey(q, k, df)});
    }
  return out;
}

}  // namespace affect::testing
