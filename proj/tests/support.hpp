#pragma once

#include "rmt/ensemble.hpp"
#include "rmt/rng.hpp"
#include "rmt/sparse_matrix.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace testing {

inline rmt::EnsembleSpec sparse_spec(std::size_t n, double q) {
  rmt::EnsembleSpec s;
  s.n = n;
  s.q = q;
  return s;
}

inline rmt::SparseSymMatrix draw(std::size_t n, double q, std::uint64_t seed) {
  rmt::Stream rng(seed);
  return rmt::sample_sparse(sparse_spec(n, q), rng);
}

inline rmt::SparseSymMatrix diagonal(const std::vector<double>& d) {
  std::vector<rmt::Entry> e;
  for (std::size_t i = 0; i < d.size(); ++i) e.push_back({std::uint32_t(i), std::uint32_t(i), d[i]});
  return rmt::SparseSymMatrix::from_entries(d.size(), e);
}

inline Eigen::VectorXd random_unit(std::size_t n, rmt::Stream& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = rng.normal();
  return v.normalized();
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rmt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
