#pragma once

#include "rmt/ensemble.hpp"
#include "rmt/experiments.hpp"
#include "rmt/records.hpp"
#include "rmt/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rmt {

// Vector constructions. Indices are 0-based; `sigma` lists a permutation of
// [0, n) and `prefix` is the number of its leading entries in the set.

/// Y^(j): Y with component j taken from Y'.
std::vector<double> replace_one(std::span<const double> y, std::span<const double> y1, std::size_t j);

/// Y^I: components in I taken from Y', the rest from Y.
std::vector<double> resample_set(std::span<const double> y, std::span<const double> y1,
                                 std::span<const std::size_t> set);

/// Y^{(j) o sigma[prefix]}: Y^{sigma[prefix]} with component j replaced by
/// Y''_j when j is in sigma[prefix] and by Y'''_j otherwise.
std::vector<double> resample_set_then_one(std::span<const double> y, std::span<const double> y1,
                                          std::span<const double> y2, std::span<const double> y3,
                                          std::span<const std::size_t> sigma, std::size_t prefix, std::size_t j);

struct IkEstimate {
  std::uint64_t k = 0;
  double estimate = 0.0;  // mean of the products
  double se = 0.0;
  double variance = 0.0;  // sample Var f(Y)
  double bound = 0.0;     // ((n+1)/n) 2 Var / k
  std::size_t trials = 0;

  /// estimate <= bound + 3 se
  [[nodiscard]] bool within_bound() const { return estimate <= bound + 3.0 * se; }
};

/// Monte Carlo I_k for f of n i.i.d. coordinates drawn by `sampler`, all k
/// sharing the trials' (Y, Y', Y'', Y''', j, sigma).
std::vector<IkEstimate> chatterjee_ik(const std::function<double(std::span<const double>)>& f,
                                      const std::function<double(Stream&)>& sampler, std::size_t n_vars,
                                      std::span<const std::uint64_t> ks, std::size_t trials, std::uint64_t seed);

/// Exact I_k for f = sum of coordinates with coordinate variance v:
/// v (1 - 2 (k - 1) / n).
double linear_ik(std::size_t n_vars, std::uint64_t k, double coordinate_variance);

struct ChatterjeeConfig {
  std::size_t n = 128;
  QRule q_rule{QRule::Kind::constant, 4.0};
  std::vector<std::uint64_t> ks{10, 100, 1000};
  std::size_t trials = 2000;
  std::uint64_t master_seed = 0;
  EntryLaw law{};

  [[nodiscard]] std::vector<std::string> problems() const;
  void validate() const;
  [[nodiscard]] json to_json() const;
};

/// One trial of the matrix estimator: f = lambda_1 - chi of H, H^(j),
/// H^{sigma[k-1]} and H^{(j) o sigma[k-1]} for every k.
struct ChatterjeeRecord {
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::size_t n = 0;
  double q = 0.0;
  std::uint64_t j = 0;  // pair key of the replaced coordinate
  double f = 0.0;       // f(H)
  double f_j = 0.0;     // f(H^(j))
  std::vector<std::uint64_t> ks;
  std::vector<double> f_sigma;    // f(H^{sigma[k-1]})
  std::vector<double> f_sigma_j;  // f(H^{(j) o sigma[k-1]})
  std::vector<std::string> flags;

  [[nodiscard]] json to_json() const;
  static ChatterjeeRecord from_json(const json& j);
};

ChatterjeeRecord run_chatterjee_trial(const ChatterjeeConfig& cfg, std::uint64_t trial);
std::vector<ChatterjeeRecord> run_chatterjee_batch(const ChatterjeeConfig& cfg, std::uint64_t lo, std::uint64_t hi);

/// I_k estimates from matrix trials (failed trials dropped).
std::vector<IkEstimate> chatterjee_estimates(std::span<const ChatterjeeRecord> records);
std::string chatterjee_csv(std::span<const IkEstimate> rows, const std::vector<std::string>& header);

}  // namespace rmt
