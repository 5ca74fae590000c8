#pragma once

#include "rmt/rng.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rmt::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

/// Sample mean and its standard error (sample sd / sqrt(n)).
MeanSe mean_se(std::span<const double> x);

double sample_variance(std::span<const double> x);

/// Standard error of the sample variance, sqrt((m4 - s^4 (n-3)/(n-1)) / n).
double variance_se(std::span<const double> x);

double median(std::span<const double> x);

/// Linear-interpolated empirical quantile, p in [0, 1].
double quantile(std::span<const double> x, double p);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval of `statistic` (level e.g. 0.95).
Interval bootstrap_ci(std::span<const double> x, const std::function<double(std::span<const double>)>& statistic,
                      Stream rng, std::size_t resamples = 1000, double level = 0.95);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = a + b x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace rmt::stats
