#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rmt {

/// Upper-triangle coordinate of a symmetric matrix, row <= col.
struct PairIndex {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
  friend auto operator<=>(const PairIndex&, const PairIndex&) = default;
};

struct Entry {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;
  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Number of upper-triangle pairs (i <= j) of an n x n matrix.
constexpr std::uint64_t pair_count(std::size_t n) noexcept {
  return static_cast<std::uint64_t>(n) * (n + 1) / 2;
}

/// Row-major upper-triangle encoding of (i, j), i <= j.
constexpr std::uint64_t pair_key(std::size_t n, std::uint32_t i, std::uint32_t j) noexcept {
  const std::uint64_t row = i;
  return row * n - (row * (row - 1)) / 2 + (j - i);
}

/// Full symmetric CSR (both triangles) for fast products.
struct SymCsr {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> col;
  std::vector<double> val;
};

/// Symmetric matrix stored by its nonzero upper-triangle entries.
/// Immutable after construction: entries are sorted by (row, col), unique
/// and nonzero.
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;
  explicit SparseSymMatrix(std::size_t n) : n_(n) {}

  /// Sorts, drops explicit zeros, and rejects duplicates or lower-triangle keys.
  static SparseSymMatrix from_entries(std::size_t n, std::vector<Entry> entries);
  /// Builds from a dense symmetric matrix (upper triangle is read).
  static SparseSymMatrix from_dense(const Eigen::MatrixXd& dense);

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return entries_.size(); }
  [[nodiscard]] std::span<const Entry> entries() const noexcept { return entries_; }

  /// h_ij for any (i, j); symmetric lookup.
  [[nodiscard]] double value(std::uint32_t i, std::uint32_t j) const;

  [[nodiscard]] Eigen::MatrixXd dense() const;
  [[nodiscard]] SymCsr csr() const;

  /// Sum over the full symmetric matrix of h_ij^2.
  [[nodiscard]] double frobenius_sq() const noexcept;
  [[nodiscard]] double trace() const noexcept;

  friend bool operator==(const SparseSymMatrix&, const SparseSymMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<Entry> entries_;
};

/// Copy of `h` with (i, j) and (j, i) set to `value` (zero removes the entry).
SparseSymMatrix with_entry(const SparseSymMatrix& h, std::uint32_t i, std::uint32_t j, double value);

}  // namespace rmt
