#include <doctest.h>

#include "rmt/edge_model.hpp"
#include "rmt/stats.hpp"
#include "support.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

using namespace rmt;

namespace {

EdgeModel with_chi(double chi, std::optional<double> quartic = std::nullopt) {
  EdgeModel m;
  m.chi = chi;
  m.quartic = quartic;
  return m;
}

// Semicircle mass above x, closed form.
double sc_mass_above(double x) {
  return 0.5 - (x * std::sqrt(4 - x * x) / (4 * std::numbers::pi) + std::asin(x / 2) / std::numbers::pi);
}

}  // namespace

TEST_CASE("semicircle transform") {
  CHECK(std::abs(m_sc(cplx(2.0, 1e-10)) + 1.0) < 1e-4);
  const cplx far = m_sc(cplx(0.0, 1e6));
  CHECK(std::abs(far - cplx(0.0, 1e-6)) <= 1e-6 * 1e-6);
  CHECK(std::abs(m_sc(cplx(0.0, 1e-8)).imag() - 1.0) <= 1e-4);
  CHECK(std::abs(m_sc(cplx(50.0, 0.5)) + 1.0 / cplx(50.0, 0.5)) < 1e-3);
  CHECK_THROWS_AS(m_sc(cplx(1.0, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(m_sc(cplx(1.0, -1.0)), std::invalid_argument);
  for (double e = -3; e <= 3; e += 0.25) {
    const cplx z(e, 0.3);
    const cplx m = m_sc(z);
    CHECK(std::abs(1.0 + z * m + m * m) < 1e-12);
  }
}

TEST_CASE("deformed transform without the quartic term") {
  for (double e = -3; e <= 3; e += 0.5)
    for (double eta : {1e-3, 0.1, 2.0}) {
      const cplx z(e, eta);
      CHECK(m_star(z, with_chi(0.0)) == m_sc(z));
      for (double chi : {-0.3, 0.01, 0.21}) {
        const double s = std::sqrt(1 + chi);
        CHECK(std::abs(m_star(z, with_chi(chi)) - m_sc(z / s) / s) <= 1e-12);
      }
    }
  CHECK(edge_location(with_chi(0.21)) == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(std::abs(m_star(cplx(2.2, 1e-12), with_chi(0.21)) + 1.0 / 1.1) < 1e-5);
}

TEST_CASE("edge location") {
  CHECK(edge_location(with_chi(0.0)) == 2.0);
  const double l = edge_location(with_chi(0.01));
  CHECK(l == doctest::Approx(2 * std::sqrt(1.01)).epsilon(1e-15));
  CHECK(std::abs(l - 2.01) == doctest::Approx(2.5e-5).epsilon(0.01));
  // Quartic edge against a direct minimization of z(t) = (1 + s2 t^2 + c t^4) / t.
  for (double c : {0.05, -0.02, 0.2}) {
    const double chi = 0.01;
    const double s2 = 1 + chi;
    auto z = [&](double t) { return (1 + s2 * t * t + c * t * t * t * t) / t; };
    const auto best = boost::math::tools::brent_find_minima(z, 0.2, 3.0, 60);
    CAPTURE(c);
    CHECK(edge_location(with_chi(chi, c)) == doctest::Approx(best.second).epsilon(1e-12));
  }
}

TEST_CASE("square-root behaviour at the edge") {
  for (std::optional<double> quartic : {std::optional<double>{}, std::optional<double>{0.05}}) {
    const EdgeModel model = with_chi(0.02, quartic);
    const double edge = edge_location(model);
    for (double kappa = 1e-4; kappa <= 0.1 + 1e-12; kappa *= std::sqrt(10.0)) {
      for (double eta : {1e-9, kappa / 10}) {
        const double inside = m_star(cplx(edge - kappa, eta), model).imag() / std::sqrt(kappa + eta);
        const double outside = m_star(cplx(edge + kappa, eta), model).imag() / (eta / std::sqrt(kappa + eta));
        CAPTURE(kappa);
        CAPTURE(eta);
        CHECK(inside >= 0.1);
        CHECK(inside <= 10.0);
        CHECK(outside >= 0.1);
        CHECK(outside <= 10.0);
      }
    }
  }
}

TEST_CASE("quartic deformation stays within C/q of the semicircle") {
  double fitted = 0.0;
  std::vector<double> scaled;
  for (double q : {8.0, 16.0, 32.0}) {
    for (double xi : {3.0, -3.0}) {
      const EdgeModel model = with_chi(0.0, xi / (q * q));
      double sup = 0.0;
      for (double e = -3; e <= 3; e += 0.05)
        for (double eta : {1e-3, 1e-2, 0.1, 1.0}) sup = std::max(sup, std::abs(m_star(cplx(e, eta), model) - m_sc(cplx(e, eta))));
      scaled.push_back(q * sup);
      fitted = std::max(fitted, q * sup);
    }
  }
  CAPTURE(fitted);
  CHECK(fitted <= 2.0);
  // Uniform: the largest q is no worse than the fitted constant.
  CHECK(scaled.back() <= fitted);
}

TEST_CASE("Herglotz property and branch continuity") {
  for (std::optional<double> quartic : {std::optional<double>{}, std::optional<double>{0.04}, std::optional<double>{-0.02}}) {
    const EdgeModel model = with_chi(0.05, quartic);
    const double edge = edge_location(model);
    for (double e : {-3.0, -edge, 0.0, edge - 1e-3, edge, edge + 1e-3, 3.0}) {
      double prev_eta = 1e-6;
      cplx prev = m_star(cplx(e, prev_eta), model);
      for (double eta = 1e-6 * 1.1; eta <= 10.0; eta *= 1.1) {
        const cplx m = m_star(cplx(e, eta), model);
        CHECK(m.imag() > 0);
        // |m'(z)| <= Im m / Im z for a Herglotz function.
        const double bound = 10.0 * (eta - prev_eta) * prev.imag() / prev_eta;
        CHECK(std::abs(m - prev) <= bound);
        prev = m;
        prev_eta = eta;
      }
    }
  }
}

TEST_CASE("density") {
  CHECK(density(with_chi(0.0), 0.0) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-6));
  CHECK(density(with_chi(0.0), 1.0) == doctest::Approx(std::sqrt(3.0) / (2 * std::numbers::pi)).epsilon(1e-6));
  CHECK(density(with_chi(0.0), 2.5) <= 1e-12);
}

TEST_CASE("quantiles") {
  SUBCASE("semicircle") {
    const auto t = quantiles(with_chi(0.0), 8);
    CHECK(t.gammas[0] == 2.0);
    CHECK(std::abs(t.gammas[4]) <= 1e-10);
    CHECK(t.total_mass == doctest::Approx(1.0).epsilon(1e-10));
    // Independent oracle: invert the closed-form mass.
    std::uintmax_t it = 200;
    const auto root = boost::math::tools::toms748_solve([](double x) { return sc_mass_above(x) - 0.25; }, 0.0, 2.0,
                                                        boost::math::tools::eps_tolerance<double>(52), it);
    const double oracle = 0.5 * (root.first + root.second);
    CHECK(oracle == doctest::Approx(0.807945506599).epsilon(1e-11));
    CHECK(std::abs(t.gammas[2] - oracle) <= 1e-6);
    for (std::size_t i = 1; i < 8; ++i) CHECK(std::abs(t.gammas[i] + t.gammas[8 - i]) <= 1e-8);
  }
  SUBCASE("monotone, antisymmetric and round trip") {
    for (std::optional<double> quartic : {std::optional<double>{}, std::optional<double>{0.03}}) {
      const EdgeModel model = with_chi(0.07, quartic);
      const std::size_t n = 64;
      const auto t = quantiles(model, n);
      CHECK(t.gammas[0] == edge_location(model));
      const EdgeMass mass(model);
      for (std::size_t i = 1; i < n; ++i) {
        CHECK(t.gammas[i] <= t.gammas[i - 1]);
        CHECK(std::abs(mass.above(t.gammas[i]) - double(i) / n) <= 1e-8);
        CHECK(std::abs(t.gammas[i] + t.gammas[n - i]) <= 1e-8);
      }
    }
  }
  SUBCASE("csv") {
    std::ostringstream os;
    write_quantiles_csv(os, quantiles(with_chi(0.0), 4), {"a header"});
    CHECK(os.str().rfind("# a header\nindex,gamma\n1,2\n", 0) == 0);
  }
}

TEST_CASE("rigidity report") {
  const auto t = quantiles(with_chi(0.0), 16);
  EigenPairs exact;
  exact.values = t.gammas;
  const auto r = rigidity_report(exact, t, 4.0);
  for (double x : r.residuals) CHECK(x == 0.0);
  CHECK(r.scale == doctest::Approx(std::pow(16.0, -1.0 / 3) / 64 + std::pow(16.0, -2.0 / 3)));
}

TEST_CASE("eigenvalues are rigid" * doctest::test_suite("slow")) {
  const std::size_t n = 1024;
  const double q = 8.0;
  std::vector<double> top, edge_res, bulk_res;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto h = testing::draw(n, q, 3000 + t);
    const auto eigs = full_spectrum(h);
    EdgeModel model = with_chi(correction_term(h));
    const auto rep = rigidity_report(eigs, quantiles(model, n), q);
    top.push_back(rep.normalized[0]);
    for (std::size_t i = 0; i < 5; ++i) edge_res.push_back(rep.residuals[i]);
    for (std::size_t i = n / 2 - 2; i < n / 2 + 3; ++i) bulk_res.push_back(rep.residuals[i]);
  }
  CAPTURE(stats::quantile(top, 0.95));
  CHECK(stats::quantile(top, 0.95) <= 20.0);
  CHECK(stats::median(bulk_res) < stats::median(edge_res));
}
