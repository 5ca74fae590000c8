#include <doctest.h>

#include "rmt/resample.hpp"
#include "rmt/resolvent.hpp"
#include "rmt/stats.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

using namespace rmt;

namespace {

std::vector<PairIndex> all_pairs(std::size_t n) {
  std::vector<PairIndex> p;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j) p.push_back({i, j});
  return p;
}

Eigen::MatrixXcd direct_inverse(const Eigen::MatrixXd& h, cplx z) {
  const Eigen::MatrixXcd shifted = h.cast<cplx>() - z * Eigen::MatrixXcd::Identity(h.rows(), h.cols());
  return shifted.partialPivLu().inverse();
}

}  // namespace

TEST_CASE("resolvent of trivial matrices") {
  const auto zero = SparseSymMatrix(5);
  const auto pairs = all_pairs(5);
  const auto p = probe(zero, cplx(0, 1), pairs);
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    const cplx expect = pairs[c].row == pairs[c].col ? cplx(0, 1) : cplx(0, 0);
    CHECK(std::abs(p.values[c] - expect) <= 1e-15);
  }
  const auto one = testing::diagonal({0.7});
  const PairIndex only[] = {{0, 0}};
  const cplx z(0.2, 0.3);
  CHECK(std::abs(probe(one, z, only).values[0] - 1.0 / (0.7 - z)) <= 1e-15);
  CHECK_THROWS_AS(probe(one, cplx(0.2, 0.0), only), std::invalid_argument);
  CHECK_THROWS_AS(probe(one, cplx(0.2, -1.0), only), std::invalid_argument);
}

TEST_CASE("spectral reconstruction against a direct inverse") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto h = testing::draw(64, 3.0, 40 + s);
    const cplx z(0.3 * double(s) - 0.5, 0.01 + 0.05 * double(s));
    const Eigen::MatrixXcd oracle = direct_inverse(h.dense(), z);
    const auto p = probe(h, z, all_pairs(64));
    for (std::size_t c = 0; c < p.pairs.size(); ++c) {
      CHECK(std::abs(p.values[c] - oracle(p.pairs[c].row, p.pairs[c].col)) <= 1e-9);
    }
    REQUIRE(p.m.has_value());
    CHECK(std::abs(*p.m - oracle.trace() / 64.0) <= 1e-9);
    CHECK(p.max_solve_residual <= 1e-9);
  }
}

TEST_CASE("matrix-free columns agree with the dense path") {
  const std::size_t n = 128;
  const auto h = testing::draw(n, 4.0, 77);
  const cplx z(1.9, 0.02);
  std::vector<PairIndex> pairs;
  for (std::uint32_t i = 0; i < n; ++i) pairs.push_back({i, i});
  pairs.push_back({3, 17});
  pairs.push_back({17, 3});
  ProbeOptions iterative;
  iterative.dense_cap = 16;
  const auto a = probe(h, z, pairs);
  const auto b = probe(h, z, pairs, iterative);
  CHECK(a.dense);
  CHECK(!b.dense);
  for (std::size_t c = 0; c < pairs.size(); ++c) CHECK(std::abs(a.values[c] - b.values[c]) <= 1e-9);
  REQUIRE(b.m.has_value());
  CHECK(std::abs(*a.m - *b.m) <= 1e-9);
  CHECK(ward_check(b) <= 1e-9);
  CHECK(b.max_solve_residual <= 1e-9);
}

TEST_CASE("Ward identity, symmetry and Herglotz") {
  SUBCASE("H = 0") {
    const double eta = 0.25;
    const PairIndex d[] = {{2, 2}};
    const auto p = probe(SparseSymMatrix(6), cplx(0, eta), d);
    const auto* col = p.column(2);
    REQUIRE(col != nullptr);
    CHECK(col->squaredNorm() == doctest::Approx(1 / (eta * eta)));
    CHECK(p.values[0].imag() / eta == doctest::Approx(1 / (eta * eta)));
    CHECK(ward_check(p) <= 1e-12);
  }
  SUBCASE("random n=32") {
    double worst = 0.0;
    double asym = 0.0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
      Stream rng = Stream(5).split(t);
      const auto h = testing::draw(32, 2.0 + 2.0 * rng.uniform(), 1000 + t);
      const cplx z(4 * rng.uniform() - 2, std::pow(10.0, -3 * rng.uniform()));
      const std::uint32_t i = std::uint32_t(rng.below(32)), j = std::uint32_t(rng.below(32));
      const PairIndex pr[] = {{i, j}, {j, i}, {i, i}};
      const auto p = probe(h, z, pr);
      worst = std::max(worst, ward_check(p));
      asym = std::max(asym, std::abs(p.values[0] - p.values[1]));
      CHECK(p.values[2].imag() > 0);
    }
    CAPTURE(worst);
    CHECK(worst <= 1e-9);
    CHECK(asym <= 1e-10);
  }
}

TEST_CASE("local law") {
  SUBCASE("eigenvalues at their typical locations") {
    const std::size_t n = 512;
    EdgeModel model;
    model.q = 8;
    const auto t = quantiles(model, n);
    std::vector<GridPoint> grid;
    for (double kappa : {-0.5, -0.1, 0.0, 0.1})
      for (double eta : {0.02, 0.1, 1.0}) grid.push_back({kappa, eta});
    for (const LawResidual& r : local_law_residual(t.gammas, model, grid)) {
      CAPTURE(r.kappa);
      CAPTURE(r.eta);
      CHECK(r.residual <= 1e-6 + 1.0 / (n * r.eta));
    }
  }
  SUBCASE("far from the edge") {
    const auto h = testing::draw(512, 8.0, 3);
    EdgeModel model;
    model.chi = correction_term(h);
    model.q = 8;
    const auto eigs = full_spectrum(h);
    const GridPoint far[] = {{1.0, 1.0}};
    const auto r = local_law_residual(eigs.values, model, far)[0];
    CHECK(r.residual <= r.bound);
  }
  SUBCASE("csv") {
    const LawResidual row{0.5, 0.25, {}, {}, 0.125, 1.0};
    std::ostringstream os;
    write_law_csv(os, std::span<const LawResidual>(&row, 1), {"h"});
    CHECK(os.str() == "# h\nkappa,eta,residual,bound\n0.5,0.25,0.125,1\n");
  }
}

TEST_CASE("local law and entry bounds at n=1024" * doctest::test_suite("slow")) {
  const std::size_t n = 1024;
  const double q = 8.0;
  std::vector<GridPoint> grid;
  for (double kappa : {-0.1, -0.01, -0.001, 0.0, 0.001, 0.01, 0.1})
    for (double eta : {std::pow(double(n), -0.9), 0.01, 0.1, 1.0}) grid.push_back({kappa, eta});
  std::size_t points = 0, within = 0;
  std::vector<double> norm_abs, norm_im, off, diag;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto h = testing::draw(n, q, 800 + t);
    EdgeModel model;
    model.chi = correction_term(h);
    model.q = q;
    model.n = n;
    const auto r = SpectralResolvent::from_sparse(h);
    const std::vector<double> values(r.values().data(), r.values().data() + n);
    for (const LawResidual& x : local_law_residual(values, model, grid)) {
      ++points;
      within += x.residual <= 30 * x.bound;
    }
    const auto e = entry_law_residual(r, edge_location(model), q, 0.05);
    norm_abs.push_back(e.normalized_abs);
    norm_im.push_back(e.normalized_im);
    off.push_back(e.mean_offdiag_im);
    diag.push_back(e.mean_diag_im);
  }
  CHECK(double(within) >= 0.99 * double(points));
  // Fitted constants: the largest normalized statistic stays within a
  // small factor of the typical one.
  MESSAGE("entry law medians: |R_ij| - delta_ij ", stats::median(norm_abs), ", Im R_ij ", stats::median(norm_im));
  CHECK(*std::max_element(norm_abs.begin(), norm_abs.end()) <= 3 * stats::median(norm_abs));
  CHECK(*std::max_element(norm_im.begin(), norm_im.end()) <= 3 * stats::median(norm_im));
  const auto o = stats::mean_se(off);
  CHECK(std::abs(o.mean) <= 0.01 * stats::median(diag));
}

TEST_CASE("entry law for H = 0") {
  const auto r = SpectralResolvent::from_sparse(SparseSymMatrix(8));
  const double delta = 0.05;
  const auto e = entry_law_residual(r, 2.0, 4.0, delta, 5);
  double expect = 0.0;
  for (double energy : edge_window(2.0, 8, delta, 5)) expect = std::max(expect, std::abs(1 / std::abs(cplx(energy, e.eta)) - 1));
  CHECK(e.max_abs_dev == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("eigenvector link") {
  SUBCASE("rank one") {
    const std::size_t n = 200;
    Stream rng(2);
    const Eigen::VectorXd v = testing::random_unit(n, rng);
    const double lambda = 1.5;
    const auto r = SpectralResolvent::from_dense(lambda * v * v.transpose());
    const double eta = edge_eta(n, 0.05);
    const double link = eigvec_link_residual(r, 0.05);
    CHECK(link <= 2 * n * eta * eta / (lambda * lambda));
    CHECK(link > 0);
  }
  SUBCASE("sign flips") {
    const auto h = testing::draw(100, 4.0, 6);
    const std::vector<std::size_t> all = [] {
      std::vector<std::size_t> a(100);
      for (std::size_t i = 0; i < 100; ++i) a[i] = i;
      return a;
    }();
    auto e = full_spectrum(h, all);
    const double before = eigvec_link_residual(SpectralResolvent(e), 0.05);
    e.vectors.col(0) *= -1;
    e.vectors.col(3) *= -1;
    CHECK(eigvec_link_residual(SpectralResolvent(e), 0.05) == before);
  }
}

TEST_CASE("eigenvector link at n=1024, delta=0.05" * doctest::test_suite("slow") * doctest::may_fail()) {
  // Known finite-size shortfall: the p >= 2 terms carry eta^2 / (lambda_1 - lambda_p)^2,
  // about N^{-2 delta} / (gap N^{2/3})^2, which is not small at N = 1024.
  const std::size_t n = 1024;
  const double threshold = std::pow(double(n), -0.02);
  int ok = 0, flagged = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const auto r = SpectralResolvent::from_sparse(testing::draw(n, 8.0, 40000 + t));
    if (r.values()[0] - r.values()[1] < 1e-9) {
      ++flagged;
      continue;
    }
    ok += eigvec_link_residual(r, 0.05) <= threshold;
  }
  MESSAGE("link residual below N^-0.02 in ", ok, " of ", trials - flagged, " trials");
  CHECK(ok >= 0.9 * (trials - flagged));
}

TEST_CASE("detecting the top eigenvalue from the resolvent") {
  SUBCASE("diagonal") {
    std::vector<double> d(10, 0.0);
    d[0] = 2.0;
    const auto r = SpectralResolvent::from_sparse(testing::diagonal(d));
    const auto at = detect_top_from_resolvent(r, 2.0, 0.01);
    CHECK(at.holds);
    CHECK(at.witness == 0);
    const auto far = detect_top_from_resolvent(r, 12.0, 0.01);
    CHECK(far.holds);
  }
  SUBCASE("random n=256") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto r = SpectralResolvent::from_sparse(testing::draw(256, 4.0, 500 + s));
      for (double e : {r.values()[0], r.values()[0] + 10.0, 0.0, 1.9})
        for (double eta : {1e-3, 0.05}) CHECK(detect_top_from_resolvent(r, e, eta).holds);
    }
  }
}

TEST_CASE("resolvent drift") {
  const std::size_t n = 512;
  const auto spec = testing::sparse_spec(n, 8.0);
  for (std::uint64_t t = 0; t < 2; ++t) {
    const auto rp = make_resample_pair(spec, Stream::derive(4, t, Role::base), Stream::derive(4, t, Role::fresh),
                                       Stream::derive(4, t, Role::order), pair_count(n));
    const auto r = SpectralResolvent::from_sparse(rp.base());
    const auto rm = SpectralResolvent::from_sparse(rp.resample_to(pair_count(n)));
    EdgeModel model;
    model.chi = correction_term(rp.base());
    const auto w = drift_window(edge_location(model), n, 0.05);
    CHECK(w.energies.size() == 17);
    CHECK(resolvent_drift(r, r, w) == 0.0);
    const double contrast = resolvent_drift(r, rm, w);
    CAPTURE(contrast);
    CHECK(contrast > 0.5);
    CHECK(lambda1_drift(r.values()[0], r.values()[0], n, 0.05).drift == 0.0);
    const auto l = lambda1_drift(r.values()[0], rm.values()[0], n, 0.05);
    CHECK(l.normalized == doctest::Approx(l.drift * std::pow(double(n), 2.0 / 3 + 0.05)));
    CHECK(l.drift * std::pow(double(n), 2.0 / 3) < 20.0);
  }
}
