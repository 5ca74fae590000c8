#include "rmt/stats.hpp"

#include <boost/math/statistics/bivariate_statistics.hpp>
#include <boost/math/statistics/linear_regression.hpp>
#include <boost/math/statistics/univariate_statistics.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rmt::stats {

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

MeanSe mean_se(std::span<const double> x) {
  MeanSe out;
  out.count = x.size();
  if (x.empty()) return {std::nan(""), std::nan(""), 0};
  if (x.size() == 1) return {x[0], 0.0, 1};
  const auto [mean, var] = boost::math::statistics::mean_and_sample_variance(x.begin(), x.end());
  out.mean = mean;
  out.se = std::sqrt(var / static_cast<double>(x.size()));
  return out;
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("sample_variance needs at least two values");
  return boost::math::statistics::sample_variance(x.begin(), x.end());
}

double variance_se(std::span<const double> x) {
  if (x.size() < 4) throw std::invalid_argument("variance_se needs at least four values");
  const double n = static_cast<double>(x.size());
  const double s2 = sample_variance(x);
  const double mean = boost::math::statistics::mean(x.begin(), x.end());
  double m4 = 0.0;
  for (const double v : x) m4 += std::pow(v - mean, 4);
  m4 /= n;
  return std::sqrt(std::max(0.0, (m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n));
}

double median(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("median of an empty sample");
  std::vector<double> v(x.begin(), x.end());
  return boost::math::statistics::median(v);
}

double quantile(std::span<const double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Interval bootstrap_ci(std::span<const double> x, const std::function<double(std::span<const double>)>& statistic,
                      Stream rng, std::size_t resamples, double level) {
  if (x.empty()) throw std::invalid_argument("bootstrap of an empty sample");
  std::vector<double> stat(resamples);
  std::vector<double> draw(x.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (double& d : draw) d = x[rng.below(x.size())];
    stat[b] = statistic(draw);
  }
  const double tail = 0.5 * (1.0 - level);
  return {quantile(stat, tail), quantile(stat, 1.0 - tail)};
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs two or more paired points");
  std::vector<double> xv(x.begin(), x.end());
  std::vector<double> yv(y.begin(), y.end());
  const auto [c0, c1, r2] = boost::math::statistics::simple_ordinary_least_squares_with_R_squared(xv, yv);
  LineFit out{c0, c1, 0.0, r2};
  const double n = static_cast<double>(x.size());
  if (x.size() > 2) {
    const double xm = boost::math::statistics::mean(xv);
    double sxx = 0.0;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - xm) * (x[i] - xm);
      const double e = y[i] - (c0 + c1 * x[i]);
      sse += e * e;
    }
    out.slope_se = std::sqrt(sse / (n - 2.0) / sxx);
  }
  return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two or more paired points");
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  return boost::math::statistics::correlation_coefficient(rx, ry);
}

}  // namespace rmt::stats
