#include "rmt/sparse_matrix.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace rmt {

namespace {

bool entry_less(const Entry& a, const Entry& b) noexcept {
  return a.row != b.row ? a.row < b.row : a.col < b.col;
}

}  // namespace

SparseSymMatrix SparseSymMatrix::from_entries(std::size_t n, std::vector<Entry> entries) {
  SparseSymMatrix m(n);
  std::sort(entries.begin(), entries.end(), entry_less);
  m.entries_.reserve(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const Entry& x = entries[e];
    if (x.row > x.col || x.col >= n) {
      throw std::invalid_argument("entry (" + std::to_string(x.row) + ", " + std::to_string(x.col) +
                                  ") is not an upper-triangle index of a " + std::to_string(n) +
                                  "x" + std::to_string(n) + " matrix");
    }
    if (e > 0 && entries[e - 1].row == x.row && entries[e - 1].col == x.col) {
      throw std::invalid_argument("duplicate entry (" + std::to_string(x.row) + ", " +
                                  std::to_string(x.col) + ")");
    }
    if (x.value != 0.0) m.entries_.push_back(x);
  }
  return m;
}

SparseSymMatrix SparseSymMatrix::from_dense(const Eigen::MatrixXd& dense) {
  if (dense.rows() != dense.cols()) throw std::invalid_argument("matrix is not square");
  const auto n = static_cast<std::size_t>(dense.rows());
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != 0.0) {
        entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
      }
    }
  }
  return from_entries(n, std::move(entries));
}

double SparseSymMatrix::value(std::uint32_t i, std::uint32_t j) const {
  if (i > j) std::swap(i, j);
  if (j >= n_) throw std::out_of_range("matrix index out of range");
  const Entry key{i, j, 0.0};
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), key, entry_less);
  if (it != entries_.end() && it->row == i && it->col == j) return it->value;
  return 0.0;
}

Eigen::MatrixXd SparseSymMatrix::dense() const {
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (const Entry& e : entries_) {
    d(e.row, e.col) = e.value;
    d(e.col, e.row) = e.value;
  }
  return d;
}

SymCsr SparseSymMatrix::csr() const {
  SymCsr c;
  c.n = n_;
  std::vector<std::size_t> counts(n_ + 1, 0);
  for (const Entry& e : entries_) {
    ++counts[e.row + 1];
    if (e.row != e.col) ++counts[e.col + 1];
  }
  for (std::size_t i = 0; i < n_; ++i) counts[i + 1] += counts[i];
  c.row_ptr = counts;
  c.col.resize(counts[n_]);
  c.val.resize(counts[n_]);
  std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
  // Entries are sorted by (row, col), so lower-triangle contributions land in
  // each row before the upper-triangle ones and columns stay ascending.
  for (const Entry& e : entries_) {
    if (e.row != e.col) {
      const std::size_t p = fill[e.col]++;
      c.col[p] = e.row;
      c.val[p] = e.value;
    }
  }
  for (const Entry& e : entries_) {
    const std::size_t p = fill[e.row]++;
    c.col[p] = e.col;
    c.val[p] = e.value;
  }
  return c;
}

double SparseSymMatrix::frobenius_sq() const noexcept {
  double s = 0.0;
  for (const Entry& e : entries_) s += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
  return s;
}

double SparseSymMatrix::trace() const noexcept {
  double s = 0.0;
  for (const Entry& e : entries_) {
    if (e.row == e.col) s += e.value;
  }
  return s;
}

SparseSymMatrix with_entry(const SparseSymMatrix& h, std::uint32_t i, std::uint32_t j, double value) {
  if (i > j) std::swap(i, j);
  std::vector<Entry> entries;
  entries.reserve(h.nnz() + 1);
  bool placed = false;
  for (const Entry& e : h.entries()) {
    if (e.row == i && e.col == j) {
      placed = true;
      if (value != 0.0) entries.push_back({i, j, value});
    } else {
      entries.push_back(e);
    }
  }
  if (!placed && value != 0.0) entries.push_back({i, j, value});
  return SparseSymMatrix::from_entries(h.size(), std::move(entries));
}

}  // namespace rmt
