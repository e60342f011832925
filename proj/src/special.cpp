#include "affect/special.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "affect/error.hpp"

namespace affect::stats {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kEps = 1e-15;
constexpr int kMaxIter = 10000;

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_fraction(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

double gamma_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericalError("incomplete gamma series did not converge");
}

double gamma_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw NumericalError("incomplete gamma continued fraction did not converge");
}

// 16-point Gauss-Legendre rule on [-1, 1], nodes found by Newton iteration.
struct GaussLegendre {
  static constexpr int n = 16;
  std::array<double, n> x{};
  std::array<double, n> w{};

  GaussLegendre() {
    for (int i = 0; i < n; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double step = p0 / dp;
        z -= step;
        if (std::abs(step) < 1e-16) break;
      }
      x[i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

const GaussLegendre& gauss_legendre() {
  static const GaussLegendre rule;
  return rule;
}

template <class F>
double composite_gauss(F&& f, double lo, double hi, int panels) {
  const auto& gl = gauss_legendre();
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * width, half = 0.5 * width;
    double s = 0.0;
    for (int i = 0; i < GaussLegendre::n; ++i) s += gl.w[i] * f(mid + half * gl.x[i]);
    total += s * half;
  }
  return total;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidInputError("incomplete_beta needs a, b > 0");
  if (std::isnan(x)) throw InvalidInputError("incomplete_beta: x is NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double incomplete_gamma_lower(double a, double x) {
  if (!(a > 0.0)) throw InvalidInputError("incomplete gamma needs a > 0");
  if (std::isnan(x)) throw InvalidInputError("incomplete gamma: x is NaN");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? gamma_series(a, x) : 1.0 - gamma_fraction(a, x);
}

double incomplete_gamma_upper(double a, double x) {
  if (!(a > 0.0)) throw InvalidInputError("incomplete gamma needs a > 0");
  if (std::isnan(x)) throw InvalidInputError("incomplete gamma: x is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - gamma_series(a, x) : gamma_fraction(a, x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double f_survival(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw InvalidInputError("F distribution needs positive degrees of freedom");
  if (std::isnan(f)) throw InvalidInputError("F statistic is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

double chi_square_survival(double x, double k) {
  if (!(k > 0.0)) throw InvalidInputError("chi-square needs positive degrees of freedom");
  return incomplete_gamma_upper(0.5 * k, 0.5 * x);
}

double normal_range_cdf(double w, int k) {
  if (k < 2) throw InvalidInputError("range distribution needs k >= 2");
  if (std::isnan(w)) throw InvalidInputError("range argument is NaN");
  if (w <= 0.0) return 0.0;
  if (std::isinf(w)) return 1.0;
  constexpr double kSpan = 8.5;
  const auto integrand = [&](double z) {
    const double inner = normal_cdf(z) - normal_cdf(z - w);
    return inner <= 0.0 ? 0.0 : normal_pdf(z) * std::pow(inner, k - 1);
  };
  const double v = k * composite_gauss(integrand, -kSpan, kSpan + std::min(w, kSpan), 12);
  return std::clamp(v, 0.0, 1.0);
}

double studentized_range_cdf(double q, int k, double df) {
  if (k < 2) throw InvalidInputError("studentized range needs k >= 2");
  if (!(df > 0.0)) throw InvalidInputError("studentized range needs df > 0");
  if (std::isnan(q)) throw InvalidInputError("studentized range argument is NaN");
  if (q <= 0.0) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (std::isinf(df)) return normal_range_cdf(q, k);
  // Mix the range CDF over the density of s = sqrt(chi2_df / df).
  const double log_norm = std::log(2.0) + 0.5 * df * std::log(0.5 * df) - std::lgamma(0.5 * df);
  const double spread = 14.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, 1.0 - spread);
  const double hi = 1.0 + spread * (df < 4 ? 1.5 : 1.0);
  const auto integrand = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double log_density = log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
    if (log_density < -700.0) return 0.0;
    return std::exp(log_density) * normal_range_cdf(q * s, k);
  };
  return std::clamp(composite_gauss(integrand, lo, hi, 16), 0.0, 1.0);
}

double studentized_range_quantile(double p, int k, double df) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInputError("studentized range quantile needs p in (0, 1)");
  const auto f = [&](double q) { return studentized_range_cdf(q, k, df) - p; };
  double lo = 0.0, hi = 4.0;
  double f_lo = -p, f_hi = f(hi);
  while (f_hi < 0.0) {
    lo = hi;
    f_lo = f_hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("studentized range quantile did not bracket");
    f_hi = f(hi);
  }
  // Illinois variant of regula falsi.
  int side = 0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (fx < 0.0) {
      lo = x;
      f_lo = fx;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      hi = x;
      f_hi = fx;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace affect::stats
