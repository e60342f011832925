#pragma once

// Distribution functions needed for p-values, accurate to about 1e-10
// (beta, gamma) and 1e-8 (studentized range) over the ranges used here.

namespace affect::stats {

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Regularized lower incomplete gamma P(a, x).
double incomplete_gamma_lower(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double incomplete_gamma_upper(double a, double x);

double normal_cdf(double x);

/// P(F > f) for an F(d1, d2) variable.
double f_survival(double f, double d1, double d2);
/// P(X > x) for a chi-square variable with k degrees of freedom.
double chi_square_survival(double x, double k);

/// CDF of the range of k independent standard normals.
double normal_range_cdf(double w, int k);
/// P(Q <= q) for the studentized range with k groups and df degrees of freedom.
double studentized_range_cdf(double q, int k, double df);
/// Quantile of the studentized range (root of the CDF).
double studentized_range_quantile(double p, int k, double df);

}  // namespace affect::stats
