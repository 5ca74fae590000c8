#pragma once

#include "rmt/ensemble.hpp"
#include "rmt/rng.hpp"
#include "rmt/sparse_matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace rmt {

/// Uniformly random ordering of the N(N+1)/2 upper-triangle pairs. Only the
/// first `materialized()` positions are drawn (lazy Fisher-Yates); every
/// prefix is a uniform subset and prefixes are nested.
class PairOrder {
 public:
  PairOrder() = default;

  /// Draws the first `k_max` positions (all of them when k_max >= M).
  static PairOrder make(std::size_t n, Stream& rng, std::uint64_t k_max);
  static PairOrder make(std::size_t n, Stream& rng) { return make(n, rng, pair_count(n)); }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] std::uint64_t total() const noexcept { return pair_count(n_); }
  [[nodiscard]] std::uint64_t materialized() const noexcept { return pairs_.size(); }

  /// S_k. Throws if k exceeds the materialized prefix.
  [[nodiscard]] std::span<const PairIndex> prefix(std::uint64_t k) const;

 private:
  std::size_t n_ = 0;
  std::vector<PairIndex> pairs_;
};

/// First `count` entries of a uniform random permutation of [0, total)
/// (lazy Fisher-Yates). The drawn prefix does not depend on `count`.
std::vector<std::uint64_t> partial_permutation(std::uint64_t total, std::uint64_t count, Stream& rng);

/// Decodes the row-major upper-triangle index back to (i, j).
PairIndex decode_pair(std::size_t n, std::uint64_t key);

struct EntryChange {
  std::uint64_t position = 0;  // index in the pair order
  PairIndex pair;
  double old_value = 0.0;
  double new_value = 0.0;
};

/// Coupled (H, H', ordering) of one trial. Immutable after construction.
class ResamplePair {
 public:
  ResamplePair(SparseSymMatrix base, SparseSymMatrix fresh, PairOrder order);

  [[nodiscard]] const SparseSymMatrix& base() const noexcept { return base_; }
  [[nodiscard]] const SparseSymMatrix& fresh() const noexcept { return fresh_; }
  [[nodiscard]] const PairOrder& order() const noexcept { return order_; }
  [[nodiscard]] std::size_t size() const noexcept { return base_.size(); }

  /// H^[k]: fresh values on S_k, base values elsewhere.
  [[nodiscard]] SparseSymMatrix resample_to(std::uint64_t k) const;

  /// Entries whose value differs between H^[k_lo] and H^[k_hi], in order.
  [[nodiscard]] std::vector<EntryChange> resample_diffs(std::uint64_t k_lo, std::uint64_t k_hi) const;

 private:
  SparseSymMatrix base_;
  SparseSymMatrix fresh_;
  PairOrder order_;
  std::vector<EntryChange> changes_;  // sorted by position
};

/// Builds a trial's coupled pair: H and H' from independent streams of the
/// same ensemble and the ordering materialized up to k_max.
ResamplePair make_resample_pair(const EnsembleSpec& spec, Stream base_rng, Stream fresh_rng, Stream order_rng,
                                std::uint64_t k_max);

/// H with the entries listed in `changes` set to their new values.
SparseSymMatrix apply_changes(const SparseSymMatrix& h, std::span<const EntryChange> changes);

/// H_(ij): h_ij and h_ji replaced by a fresh draw from the ensemble.
SparseSymMatrix single_resample(const SparseSymMatrix& h, const EnsembleSpec& spec, std::uint32_t i,
                                std::uint32_t j, Stream& rng);

struct SingleResampleQuantities {
  double q_st = 0.0;
  double z_st = 0.0;
  PairIndex pair;
};

/// Q_st = (h_st^2 - h''_st^2)(1 + 1(s != t)) / N and Z_st = (h_st - h''_st)(1 + 1(s != t)),
/// read off H and H_(st). Throws if the matrices differ anywhere else.
SingleResampleQuantities single_resample_quantities(const SparseSymMatrix& h, const SparseSymMatrix& h_st,
                                                    std::uint32_t s, std::uint32_t t);

}  // namespace rmt
