#include <doctest.h>

#include "rmt/resample.hpp"
#include "rmt/spectral.hpp"
#include "rmt/stats.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace rmt;

namespace {

EigenPairs lanczos(const SparseSymMatrix& h, std::size_t m, const Eigen::MatrixXd* warm = nullptr,
                   Which which = Which::largest) {
  const SymCsr csr = h.csr();
  return top_eigs(make_operator(csr), m, which, warm);
}

}  // namespace

TEST_CASE("dense spectrum of simple matrices") {
  const std::size_t idx[] = {0, 1, 2};
  SUBCASE("identity") {
    const auto e = full_spectrum(Eigen::MatrixXd::Identity(5, 5), idx);
    for (double v : e.values) CHECK(v == doctest::Approx(1.0));
    CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  }
  SUBCASE("diag(3,1,2)") {
    const auto e = full_spectrum(testing::diagonal({3, 1, 2}), idx);
    REQUIRE(e.values.size() == 3);
    CHECK(e.values[0] == doctest::Approx(3.0));
    CHECK(e.values[1] == doctest::Approx(2.0));
    CHECK(e.values[2] == doctest::Approx(1.0));
    CHECK(e.vector(0)(0) == doctest::Approx(1.0));
    CHECK(e.vector(1)(2) == doctest::Approx(1.0));
    CHECK(e.vector(2)(1) == doctest::Approx(1.0));
  }
  SUBCASE("cap") { CHECK_THROWS_AS(full_spectrum(Eigen::MatrixXd::Identity(5, 5), {}, 4), std::invalid_argument); }
}

TEST_CASE("trace identities") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto h = testing::draw(16, 2.0, s);
    const auto e = full_spectrum(h);
    double sum = 0.0, sq = 0.0;
    for (double v : e.values) {
      sum += v;
      sq += v * v;
    }
    CHECK(std::abs(sum - h.trace()) <= 1e-10);
    CHECK(std::abs(sq - h.frobenius_sq()) <= 1e-10);
    CHECK(std::is_sorted(e.values.rbegin(), e.values.rend()));
  }
}

TEST_CASE("canonical sign") {
  Eigen::VectorXd v(4);
  v << 0.1, -0.7, 0.7, 0.1;
  canonicalize_sign(v);
  CHECK(v(1) > 0);
  const std::size_t idx[] = {0, 1, 2, 3};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto e = full_spectrum(testing::draw(30, 3.0, s), idx);
    for (int c = 0; c < 4; ++c) {
      const Eigen::VectorXd col = e.vectors.col(c);
      Eigen::Index at = 0;
      col.cwiseAbs().maxCoeff(&at);
      CHECK(col(at) > 0);
      CHECK(std::abs(col.norm() - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("Lanczos") {
  SUBCASE("diag(5,1,...,1)") {
    std::vector<double> d(40, 1.0);
    d[0] = 5.0;
    const auto e = lanczos(testing::diagonal(d), 1);
    CHECK(e.values[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(e.vector(0)(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(e.method == EigenMethod::iterative_topm);
  }
  SUBCASE("agrees with the dense oracle") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto h = testing::draw(512, 4.0, 300 + s);
      const std::size_t idx[] = {0};
      const auto dense = full_spectrum(h, idx);
      const auto it = lanczos(h, 1);
      CHECK(std::abs(it.values[0] - dense.values[0]) <= 1e-7);
      if (dense.values[0] - dense.values[1] > 1e-6) CHECK(overlap(it.vector(0), dense.vector(0)) >= 1 - 1e-8);
      const SymCsr csr = h.csr();
      CHECK(max_relative_residual(make_operator(csr), it) <= 1e-8);
    }
  }
  SUBCASE("smallest end") {
    const auto h = testing::draw(300, 4.0, 12);
    const auto dense = full_spectrum(h);
    const auto it = lanczos(h, 2, nullptr, Which::smallest);
    CHECK(it.first_index == 298);
    CHECK(std::abs(it.value(299) - dense.values[299]) <= 1e-7);
    CHECK(std::abs(it.value(298) - dense.values[298]) <= 1e-7);
  }
  SUBCASE("budget exhaustion is an error") {
    const auto h = testing::draw(3000, 8.0, 4);
    const SymCsr csr = h.csr();
    LanczosOptions o;
    o.max_basis = 22;
    o.max_restarts = 0;
    o.tol = 1e-15;
    CHECK_THROWS_AS(top_eigs(make_operator(csr), 1, Which::largest, nullptr, o), ConvergenceError);
  }
}

TEST_CASE("Lanczos matches dense on 100 draws at n=512" * doctest::test_suite("slow")) {
  int compared = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto h = testing::draw(512, 4.0, 7000 + s);
    const std::size_t idx[] = {0};
    const auto dense = full_spectrum(h, idx);
    const auto it = lanczos(h, 1);
    CHECK(std::abs(it.values[0] - dense.values[0]) <= 1e-7);
    if (dense.values[0] - dense.values[1] > 1e-6) {
      CHECK(overlap(it.vector(0), dense.vector(0)) >= 1 - 1e-8);
      ++compared;
    }
  }
  CHECK(compared > 90);
}

TEST_CASE("warm start needs fewer products") {
  std::vector<double> cold, warm;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto spec = testing::sparse_spec(512, 4.0);
    const auto rp = make_resample_pair(spec, Stream::derive(8, t, Role::base), Stream::derive(8, t, Role::fresh),
                                       Stream::derive(8, t, Role::order), 1010);
    const auto prev = lanczos(rp.resample_to(1000), 1);
    const auto next = rp.resample_to(1010);
    const auto c = lanczos(next, 1);
    const auto w = lanczos(next, 1, &prev.vectors);
    CHECK(std::abs(c.values[0] - w.values[0]) <= 1e-9);
    cold.push_back(c.matvecs);
    warm.push_back(w.matvecs);
  }
  CAPTURE(stats::median(cold));
  CAPTURE(stats::median(warm));
  CHECK(stats::median(warm) < stats::median(cold));
}

TEST_CASE("overlap and aligned distance") {
  Stream rng(5);
  const Eigen::VectorXd v = testing::random_unit(20, rng);
  const Eigen::VectorXd w = testing::random_unit(20, rng);
  CHECK(overlap(v, v) == 1.0);
  CHECK(overlap(v, Eigen::VectorXd(-v)) == 1.0);
  CHECK(overlap(v, Eigen::VectorXd(-w)) == overlap(v, w));
  CHECK(overlap(Eigen::VectorXd(-v), w) == overlap(v, w));
  CHECK(aligned_inf_dist(v, Eigen::VectorXd(-w)) == aligned_inf_dist(v, w));
  CHECK(aligned_inf_dist(v, Eigen::VectorXd(-v)) == 0.0);
  CHECK_THROWS_AS(overlap(v, Eigen::VectorXd::Ones(3)), std::invalid_argument);
  CHECK_THROWS_AS(aligned_inf_dist(v, Eigen::VectorXd::Ones(3)), std::invalid_argument);

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4), e2 = Eigen::VectorXd::Zero(4);
  e1(0) = 1;
  e2(1) = 1;
  CHECK(overlap(e1, e2) == 0.0);
  CHECK(aligned_inf_dist(e1, e2) == doctest::Approx(2.0));

  // Simultaneous permutation.
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
  perm.setIdentity();
  std::reverse(perm.indices().data(), perm.indices().data() + 20);
  std::swap(perm.indices()(3), perm.indices()(11));
  CHECK(aligned_inf_dist(Eigen::VectorXd(perm * v), Eigen::VectorXd(perm * w)) == aligned_inf_dist(v, w));
}

TEST_CASE("independent unit vectors have overlap about sqrt(2/(pi N))") {
  const std::size_t n = 1000;
  Stream rng(41);
  std::vector<double> o;
  for (int t = 0; t < 1000; ++t) {
    const auto v = testing::random_unit(n, rng);
    const auto w = testing::random_unit(n, rng);
    o.push_back(overlap(v, w));
  }
  const auto m = stats::mean_se(o);
  CHECK(std::abs(m.mean - std::sqrt(2.0 / (std::numbers::pi * n))) <= 3 * m.se);
}

TEST_CASE("delocalization statistic") {
  CHECK(delocalization_stat(Eigen::VectorXd::Constant(64, 1.0 / 8.0)) == doctest::Approx(1.0));
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(64);
  e1(0) = 1;
  CHECK(delocalization_stat(e1) == doctest::Approx(8.0));
}

TEST_CASE("top eigenvectors are delocalized" * doctest::test_suite("slow")) {
  const std::size_t n = 2048;
  const double cap = 8.0 * std::sqrt(std::log(double(n)));
  int ok = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) ok += delocalization_stat(lanczos(testing::draw(n, 8.0, 60000 + t), 5).vectors) <= cap;
  CHECK(ok >= 0.99 * trials);
}

TEST_CASE("gap statistics") {
  const std::size_t idx[] = {0};
  CHECK(gap_stats(full_spectrum(testing::diagonal({1, 1})), idx).gaps[0] == 0.0);
  CHECK(gap_stats(full_spectrum(testing::diagonal({3, 1})), idx).gaps[0] == doctest::Approx(2.0));
  const std::size_t last[] = {1};
  CHECK_THROWS_AS(gap_stats(full_spectrum(testing::diagonal({3, 1})), last), std::out_of_range);
}

TEST_CASE("top gap tail is linear in delta" * doctest::test_suite("slow")) {
  const std::size_t n = 512;
  const double deltas[] = {0.1, 0.3, 1.0};
  std::vector<double> gaps;
  for (std::uint64_t t = 0; t < 2000; ++t) {
    const auto e = lanczos(testing::draw(n, 4.0, 20000 + t), 2);
    gaps.push_back(e.values[0] - e.values[1]);
  }
  double c = 0.0;
  double prev = 0.0;
  for (double d : deltas) {
    const double p = double(std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g <= d / n; })) / gaps.size();
    c = std::max(c, p / (d * std::log(double(n))));
    CHECK(p >= prev);
    prev = p;
  }
  CAPTURE(c);
  CHECK(c <= 1.0);
}
