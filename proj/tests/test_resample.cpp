#include <doctest.h>

#include "rmt/resample.hpp"
#include "rmt/stats.hpp"
#include "support.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

using namespace rmt;
using testing::sparse_spec;

namespace {

ResamplePair coupled(std::size_t n, double q, std::uint64_t trial, std::uint64_t k_max) {
  return make_resample_pair(sparse_spec(n, q), Stream::derive(3, trial, Role::base),
                            Stream::derive(3, trial, Role::fresh), Stream::derive(3, trial, Role::order), k_max);
}

}  // namespace

TEST_CASE("orderings of n=2 are uniform") {
  std::map<std::vector<std::uint64_t>, int> counts;
  const int draws = 60000;
  for (int t = 0; t < draws; ++t) {
    Stream rng = Stream(17).split(t);
    const auto order = PairOrder::make(2, rng);
    std::vector<std::uint64_t> keys;
    for (const PairIndex& p : order.prefix(3)) keys.push_back(pair_key(2, p.row, p.col));
    ++counts[keys];
  }
  REQUIRE(counts.size() == 6);
  const double p = 1.0 / 6.0;
  const double se = std::sqrt(p * (1 - p) / draws);
  for (const auto& [perm, c] : counts) CHECK(std::abs(double(c) / draws - p) <= 3 * se);
}

TEST_CASE("pair order prefixes") {
  Stream rng(4);
  const auto order = PairOrder::make(9, rng);
  const std::uint64_t m = pair_count(9);
  CHECK(order.prefix(0).empty());
  CHECK_THROWS((void)order.prefix(m + 1));
  std::set<PairIndex> all(order.prefix(m).begin(), order.prefix(m).end());
  CHECK(all.size() == m);
  for (const PairIndex& p : all) CHECK(p.row <= p.col);
  for (std::uint64_t k = 0; k < m; ++k) {
    const auto a = order.prefix(k);
    const auto b = order.prefix(k + 1);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  // A lazily drawn prefix matches the full ordering from the same stream.
  Stream again(4);
  const auto lazy = PairOrder::make(9, again, 10);
  CHECK(lazy.materialized() == 10);
  const auto full10 = order.prefix(10);
  const auto lazy10 = lazy.prefix(10);
  CHECK(std::equal(full10.begin(), full10.end(), lazy10.begin(), lazy10.end()));
  for (std::uint64_t key = 0; key < m; ++key) {
    const PairIndex p = decode_pair(9, key);
    CHECK(pair_key(9, p.row, p.col) == key);
  }
}

TEST_CASE("resample_to endpoints and entrywise definition") {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const auto rp = coupled(12, 2.5, trial, pair_count(12));
    const std::uint64_t m = pair_count(12);
    CHECK(rp.resample_to(0) == rp.base());
    CHECK(rp.resample_to(m) == rp.fresh());
    CHECK_THROWS((void)rp.resample_to(m + 1));
    for (std::uint64_t k = 0; k <= m; ++k) {
      const auto hk = rp.resample_to(k);
      const auto s = rp.order().prefix(k);
      const std::set<PairIndex> in(s.begin(), s.end());
      for (std::uint32_t i = 0; i < 12; ++i)
        for (std::uint32_t j = i; j < 12; ++j) {
          const double expect = in.count({i, j}) ? rp.fresh().value(i, j) : rp.base().value(i, j);
          CHECK(hk.value(i, j) == expect);
          CHECK(hk.value(j, i) == expect);
        }
    }
  }
}

TEST_CASE("resample diffs") {
  const auto rp = coupled(24, 3.0, 9, pair_count(24));
  const std::uint64_t m = pair_count(24);
  CHECK(rp.resample_diffs(40, 40).empty());
  for (auto [lo, hi] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{{0, 7}, {7, 100}, {0, m}, {100, m}}) {
    const auto d = rp.resample_diffs(lo, hi);
    CHECK(apply_changes(rp.resample_to(lo), d) == rp.resample_to(hi));
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(d[i - 1].position < d[i].position);
  }
  std::uint64_t differ = 0;
  for (std::uint32_t i = 0; i < 24; ++i)
    for (std::uint32_t j = i; j < 24; ++j) differ += rp.base().value(i, j) != rp.fresh().value(i, j);
  CHECK(rp.resample_diffs(0, m).size() == differ);
  auto a = rp.resample_diffs(0, 50);
  const auto b = rp.resample_diffs(50, m);
  a.insert(a.end(), b.begin(), b.end());
  const auto whole = rp.resample_diffs(0, m);
  REQUIRE(a.size() == whole.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].position == whole[i].position);
    CHECK(a[i].new_value == whole[i].new_value);
  }
}

TEST_CASE("change probability per resampled pair") {
  // Rademacher: P(h != h') = 2p(1-p) + p^2 / 2.
  const EnsembleSpec spec = sparse_spec(16, 2.0);
  const double p = spec.rate();
  const double exact = 2 * p * (1 - p) + p * p / 2;
  const int draws = 100000;
  int changed = 0;
  for (int t = 0; t < draws; ++t) {
    Stream a = Stream(21).split(t), b = Stream(22).split(t);
    changed += draw_entry(spec, 2, 5, a) != draw_entry(spec, 2, 5, b);
  }
  const double se = std::sqrt(exact * (1 - exact) / draws);
  CHECK(std::abs(double(changed) / draws - exact) <= 5 * se);

  std::vector<double> counts;
  for (std::uint64_t t = 0; t < 4000; ++t) counts.push_back(double(coupled(16, 2.0, 100 + t, 50).resample_diffs(0, 50).size()));
  const auto m = stats::mean_se(counts);
  CHECK(std::abs(m.mean - 50 * exact) <= 5 * m.se);
}

TEST_CASE("H^[k] has the law of H" * doctest::test_suite("slow")) {
  const std::size_t n = 32;
  const std::uint64_t m = pair_count(n);
  for (std::uint64_t k : {std::uint64_t(0), m / 3, m / 2, m}) {
    std::vector<double> mean, second;
    for (std::uint64_t t = 0; t < 3000; ++t) {
      const auto hk = coupled(n, 3.0, 5000 + t, m).resample_to(k);
      double s1 = 0.0, s2 = 0.0;
      for (const Entry& e : hk.entries()) {
        s1 += e.value;
        s2 += e.value * e.value;
      }
      mean.push_back(s1 / double(m));
      second.push_back(s2 / double(m));
    }
    const auto a = stats::mean_se(mean);
    const auto b = stats::mean_se(second);
    CAPTURE(k);
    CHECK(std::abs(a.mean) <= 5 * a.se);
    CHECK(std::abs(b.mean - 1.0 / n) <= 5 * b.se);
  }
}

TEST_CASE("single resample") {
  const EnsembleSpec spec = sparse_spec(20, 3.0);
  const auto h0 = testing::draw(20, 3.0, 8);
  SUBCASE("a draw equal to the old value leaves H unchanged") {
    Stream rng(123);
    Stream copy = rng;
    const auto h = with_entry(h0, 3, 7, draw_entry(spec, 3, 7, copy));
    CHECK(single_resample(h, spec, 3, 7, rng) == h);
  }
  SUBCASE("locality") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      Stream rng(s);
      const auto h = single_resample(h0, spec, 4, 11, rng);
      const Eigen::MatrixXd d = (h.dense() - h0.dense()).cwiseAbs();
      for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j)
          if (!((i == 4 && j == 11) || (i == 11 && j == 4))) CHECK(d(i, j) == 0.0);
      CHECK(h.value(4, 11) == h.value(11, 4));
    }
    Stream rng(1);
    CHECK_THROWS(single_resample(h0, spec, 5, 2, rng));
  }
  SUBCASE("the new entry follows the marginal law") {
    EnsembleSpec g = spec;
    g.law.kind = EntryKind::gaussian;
    const double p = g.rate();
    std::vector<double> x;
    for (std::uint64_t s = 0; s < 10000; ++s) {
      Stream rng = Stream(77).split(s);
      x.push_back(single_resample(h0, g, 2, 9, rng).value(2, 9));
    }
    std::sort(x.begin(), x.end());
    const boost::math::normal_distribution<> normal;
    // Mixture of an atom at 0 and N(0, 1/q^2); left limits differ only at 0.
    auto cdf = [&](double v) { return (v >= 0 ? 1 - p : 0.0) + p * boost::math::cdf(normal, v * g.q); };
    auto cdf_left = [&](double v) { return (v > 0 ? 1 - p : 0.0) + p * boost::math::cdf(normal, v * g.q); };
    double ks = 0.0;
    const double count = double(x.size());
    for (const double v : x) {
      // Ties: the empirical cdf and its left limit at v.
      const double at = double(std::upper_bound(x.begin(), x.end(), v) - x.begin()) / count;
      const double left = double(std::lower_bound(x.begin(), x.end(), v) - x.begin()) / count;
      ks = std::max({ks, std::abs(at - cdf(v)), std::abs(left - cdf_left(v))});
    }
    CAPTURE(ks);
    CHECK(ks < 0.02);
  }
}

TEST_CASE("Q and Z from a single resample") {
  const std::size_t n = 10;
  const double q = 2.0;
  const auto h = testing::draw(n, q, 2);
  SUBCASE("equal entries give zero") {
    const auto r = single_resample_quantities(h, h, 1, 6);
    CHECK(r.q_st == 0.0);
    CHECK(r.z_st == 0.0);
  }
  SUBCASE("diagonal example") {
    const auto a = with_entry(h, 3, 3, 1.0 / q);
    const auto b = with_entry(h, 3, 3, 0.0);
    const auto r = single_resample_quantities(a, b, 3, 3);
    CHECK(r.q_st == doctest::Approx(1.0 / (n * q * q)).epsilon(1e-15));
    CHECK(r.z_st == doctest::Approx(1.0 / q).epsilon(1e-15));
  }
  SUBCASE("off-diagonal factor 2") {
    const auto a = with_entry(h, 1, 4, 0.5);
    const auto b = with_entry(h, 1, 4, -0.5);
    const auto r = single_resample_quantities(a, b, 4, 1);
    CHECK(r.z_st == doctest::Approx(2.0));
    CHECK(r.q_st == doctest::Approx(0.0));
  }
  SUBCASE("other differences rejected") {
    const auto a = with_entry(h, 1, 4, 0.5);
    const auto b = with_entry(with_entry(h, 1, 4, -0.5), 0, 0, 0.25);
    CHECK_THROWS_AS(single_resample_quantities(a, b, 1, 4), std::invalid_argument);
  }
}

TEST_CASE("E[Z Z^[k] | s<t] = 4/N") {
  // H_(st) replaces h by h''; H^[k] carries h' on S_k (then its resample
  // uses h'') and h elsewhere (then it uses h''').
  const std::size_t n = 64;
  const EnsembleSpec spec = sparse_spec(n, 4.0);
  const auto h = testing::draw(n, 4.0, 6);
  for (bool in_set : {true, false}) {
    std::vector<double> prod;
    for (std::uint64_t t = 0; t < 200000; ++t) {
      Stream rng = Stream(900 + in_set).split(t);
      const double x = draw_entry(spec, 5, 9, rng);
      const double x1 = draw_entry(spec, 5, 9, rng);
      const double x2 = draw_entry(spec, 5, 9, rng);
      const double x3 = draw_entry(spec, 5, 9, rng);
      const auto base = with_entry(h, 5, 9, x);
      const auto base_k = with_entry(h, 5, 9, in_set ? x1 : x);
      const auto z = single_resample_quantities(base, with_entry(h, 5, 9, x2), 5, 9).z_st;
      const auto zk = single_resample_quantities(base_k, with_entry(h, 5, 9, in_set ? x2 : x3), 5, 9).z_st;
      prod.push_back(z * zk);
    }
    const auto m = stats::mean_se(prod);
    CAPTURE(in_set);
    CAPTURE(m.mean);
    CHECK(std::abs(m.mean - 4.0 / n) <= 5 * m.se);
  }
}
