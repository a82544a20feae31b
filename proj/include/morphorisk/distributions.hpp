#pragma once

// Tail probabilities used for Wald, likelihood-ratio, log-rank and ANOVA
// p-values. Thin wrappers over Boost.Math.

namespace morphorisk {

double normal_cdf(double z);
/// Two-sided p for a standard normal statistic.
double normal_two_sided_p(double z);
/// P(X > x) for X ~ chi-squared(df).
double chi_squared_upper(double x, double df);
/// P(X > x) for X ~ F(df1, df2).
double f_upper(double x, double df1, double df2);
/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace morphorisk
