#include "rmt/resample.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace rmt {

namespace {

std::uint64_t row_offset(std::size_t n, std::uint64_t row) noexcept {
  return row * n - (row * (row - 1)) / 2;
}

/// Draws positions 0..k_max-1 of a uniform permutation of [0, total).
/// `Slots` abstracts the dense array or the sparse displacement map; both
/// consume the stream identically, so the drawn prefix does not depend on k_max.
template <typename Slots>
void partial_fisher_yates(std::uint64_t total, std::uint64_t k_max, Stream& rng, Slots& slots,
                          std::vector<std::uint64_t>& out) {
  out.reserve(k_max);
  for (std::uint64_t t = 0; t < k_max; ++t) {
    const std::uint64_t r = t + rng.below(total - t);
    const std::uint64_t picked = slots.get(r);
    slots.set(r, slots.get(t));
    out.push_back(picked);
  }
}

struct DenseSlots {
  std::vector<std::uint64_t> v;
  std::uint64_t get(std::uint64_t i) const { return v[i]; }
  void set(std::uint64_t i, std::uint64_t x) { v[i] = x; }
};

struct SparseSlots {
  std::unordered_map<std::uint64_t, std::uint64_t> moved;
  std::uint64_t get(std::uint64_t i) const {
    const auto it = moved.find(i);
    return it == moved.end() ? i : it->second;
  }
  void set(std::uint64_t i, std::uint64_t x) { moved[i] = x; }
};

bool pair_less(const EntryChange& a, const EntryChange& b) noexcept { return a.pair < b.pair; }

}  // namespace

PairIndex decode_pair(std::size_t n, std::uint64_t key) {
  if (key >= pair_count(n)) throw std::out_of_range("pair key out of range");
  std::uint64_t lo = 0;
  std::uint64_t hi = n;  // row_offset(lo) <= key < row_offset(hi)
  while (hi - lo > 1) {
    const std::uint64_t mid = (lo + hi) / 2;
    if (row_offset(n, mid) <= key) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const std::uint64_t col = lo + (key - row_offset(n, lo));
  return {static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(col)};
}

std::vector<std::uint64_t> partial_permutation(std::uint64_t total, std::uint64_t count, Stream& rng) {
  count = std::min(count, total);
  std::vector<std::uint64_t> keys;
  if (count >= total / 8) {
    DenseSlots slots;
    slots.v.resize(total);
    for (std::uint64_t i = 0; i < total; ++i) slots.v[i] = i;
    partial_fisher_yates(total, count, rng, slots, keys);
  } else {
    SparseSlots slots;
    slots.moved.reserve(2 * count);
    partial_fisher_yates(total, count, rng, slots, keys);
  }
  return keys;
}

PairOrder PairOrder::make(std::size_t n, Stream& rng, std::uint64_t k_max) {
  if (n < 2) throw std::invalid_argument("pair order needs n >= 2");
  const std::vector<std::uint64_t> keys = partial_permutation(pair_count(n), k_max, rng);
  PairOrder order;
  order.n_ = n;
  order.pairs_.reserve(keys.size());
  for (const std::uint64_t key : keys) order.pairs_.push_back(decode_pair(n, key));
  return order;
}

std::span<const PairIndex> PairOrder::prefix(std::uint64_t k) const {
  if (k > total()) throw std::out_of_range("prefix length exceeds N(N+1)/2");
  if (k > pairs_.size()) {
    throw std::out_of_range("prefix length " + std::to_string(k) + " exceeds the materialized ordering (" +
                            std::to_string(pairs_.size()) + ")");
  }
  return std::span<const PairIndex>(pairs_.data(), static_cast<std::size_t>(k));
}

ResamplePair::ResamplePair(SparseSymMatrix base, SparseSymMatrix fresh, PairOrder order)
    : base_(std::move(base)), fresh_(std::move(fresh)), order_(std::move(order)) {
  const std::size_t n = base_.size();
  if (fresh_.size() != n || order_.size() != n) throw std::invalid_argument("resample pair: size mismatch");
  std::unordered_map<std::uint64_t, std::pair<double, double>> values;
  values.reserve(2 * (base_.nnz() + fresh_.nnz()));
  for (const Entry& e : base_.entries()) values[pair_key(n, e.row, e.col)].first = e.value;
  for (const Entry& e : fresh_.entries()) values[pair_key(n, e.row, e.col)].second = e.value;
  const auto pairs = order_.prefix(order_.materialized());
  for (std::uint64_t t = 0; t < pairs.size(); ++t) {
    const PairIndex p = pairs[t];
    const auto it = values.find(pair_key(n, p.row, p.col));
    if (it == values.end()) continue;
    const auto [old_value, new_value] = it->second;
    if (old_value != new_value) changes_.push_back({t, p, old_value, new_value});
  }
}

SparseSymMatrix ResamplePair::resample_to(std::uint64_t k) const {
  if (k > order_.total()) throw std::out_of_range("k exceeds N(N+1)/2");
  if (k > order_.materialized()) throw std::out_of_range("k exceeds the materialized ordering");
  if (k == 0) return base_;
  return apply_changes(base_, resample_diffs(0, k));
}

std::vector<EntryChange> ResamplePair::resample_diffs(std::uint64_t k_lo, std::uint64_t k_hi) const {
  if (k_lo > k_hi) throw std::invalid_argument("resample_diffs needs k_lo <= k_hi");
  if (k_hi > order_.materialized()) throw std::out_of_range("k exceeds the materialized ordering");
  auto by_position = [](const EntryChange& c, std::uint64_t pos) { return c.position < pos; };
  const auto lo = std::lower_bound(changes_.begin(), changes_.end(), k_lo, by_position);
  const auto hi = std::lower_bound(changes_.begin(), changes_.end(), k_hi, by_position);
  return {lo, hi};
}

ResamplePair make_resample_pair(const EnsembleSpec& spec, Stream base_rng, Stream fresh_rng, Stream order_rng,
                                std::uint64_t k_max) {
  SparseSymMatrix h = sample(spec, base_rng);
  SparseSymMatrix h_fresh = sample(spec, fresh_rng);
  PairOrder order = PairOrder::make(spec.n, order_rng, k_max);
  return ResamplePair(std::move(h), std::move(h_fresh), std::move(order));
}

SparseSymMatrix apply_changes(const SparseSymMatrix& h, std::span<const EntryChange> changes) {
  std::vector<EntryChange> sorted(changes.begin(), changes.end());
  std::sort(sorted.begin(), sorted.end(), pair_less);
  std::vector<Entry> out;
  out.reserve(h.nnz() + sorted.size());
  auto c = sorted.begin();
  for (const Entry& e : h.entries()) {
    const PairIndex p{e.row, e.col};
    while (c != sorted.end() && c->pair < p) {
      if (c->new_value != 0.0) out.push_back({c->pair.row, c->pair.col, c->new_value});
      ++c;
    }
    if (c != sorted.end() && c->pair == p) {
      if (c->new_value != 0.0) out.push_back({e.row, e.col, c->new_value});
      ++c;
    } else {
      out.push_back(e);
    }
  }
  for (; c != sorted.end(); ++c) {
    if (c->new_value != 0.0) out.push_back({c->pair.row, c->pair.col, c->new_value});
  }
  return SparseSymMatrix::from_entries(h.size(), std::move(out));
}

SparseSymMatrix single_resample(const SparseSymMatrix& h, const EnsembleSpec& spec, std::uint32_t i,
                                std::uint32_t j, Stream& rng) {
  if (i > j) throw std::invalid_argument("single_resample needs i <= j");
  return with_entry(h, i, j, draw_entry(spec, i, j, rng));
}

SingleResampleQuantities single_resample_quantities(const SparseSymMatrix& h, const SparseSymMatrix& h_st,
                                                    std::uint32_t s, std::uint32_t t) {
  if (s > t) std::swap(s, t);
  if (h.size() != h_st.size()) throw std::invalid_argument("single_resample_quantities: size mismatch");
  // Compare everything except (s, t).
  auto strip = [&](const SparseSymMatrix& m) {
    std::vector<Entry> rest;
    rest.reserve(m.nnz());
    for (const Entry& e : m.entries()) {
      if (!(e.row == s && e.col == t)) rest.push_back(e);
    }
    return rest;
  };
  if (strip(h) != strip(h_st)) {
    throw std::invalid_argument("single_resample_quantities: matrices differ outside (s, t)");
  }
  const double factor = s != t ? 2.0 : 1.0;
  const double before = h.value(s, t);
  const double after = h_st.value(s, t);
  const double nn = static_cast<double>(h.size());
  return {(before * before - after * after) * factor / nn, (before - after) * factor, {s, t}};
}

}  // namespace rmt
