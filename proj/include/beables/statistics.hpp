#pragma once

#include <span>
#include <vector>

namespace beables::stats {

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);

/// Integrated autocorrelation time τ_int = 1/2 + Σ_k ρ(k), with Sokal's
/// automatic window (stop at the first W ≥ c·τ_int(W)). Returned in units of
/// the sampling interval; uncorrelated data gives ≈ 0.5.
double integrated_autocorr_time(std::span<const double> x, double c = 5.0);

struct BlockingResult {
  double mean = 0.0;
  double std_error = 0.0;
  int levels = 0;
};

/// Flyvbjerg–Petersen blocking: repeatedly pair-average the series and take
/// the largest naive standard error over levels that keep ≥ 32 blocks.
/// Throws ContractError for fewer than 64 samples.
BlockingResult blocking(std::span<const double> x);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

/// Ordinary least squares y = slope·x + intercept.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Standard normal CDF.
double normal_cdf(double z);

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace beables::stats
