#include <doctest.h>

#include "rmt/chatterjee.hpp"
#include "rmt/resample.hpp"

#include <cmath>
#include <numeric>
#include <vector>

using namespace rmt;

namespace {

using V = std::vector<double>;

}  // namespace

TEST_CASE("worked example of the vector constructions") {
  // Y = 1..5, Y' = 10.., Y'' = 20.., Y''' = 30..
  const V y{1, 2, 3, 4, 5}, y1{11, 12, 13, 14, 15}, y2{21, 22, 23, 24, 25}, y3{31, 32, 33, 34, 35};
  const std::vector<std::size_t> sigma{1, 2, 0, 4, 3};
  CHECK(resample_set(y, y1, std::span(sigma).first(2)) == V{1, 12, 13, 4, 5});
  CHECK(resample_set_then_one(y, y1, y2, y3, sigma, 2, 2) == V{1, 12, 23, 4, 5});
  CHECK(resample_set_then_one(y, y1, y2, y3, sigma, 2, 0) == V{31, 12, 13, 4, 5});
  CHECK(replace_one(y, y1, 3) == V{1, 2, 3, 14, 5});
  CHECK(resample_set_then_one(y, y1, y2, y3, sigma, 0, 4) == V{1, 2, 3, 4, 35});
  CHECK_THROWS_AS(replace_one(y, y1, 5), std::out_of_range);
  CHECK_THROWS_AS(resample_set_then_one(y, y1, y2, y3, sigma, 6, 0), std::out_of_range);
  CHECK_THROWS_AS(replace_one(y, V{1}, 0), std::invalid_argument);
}

TEST_CASE("linear functional matches the closed form") {
  const std::size_t n = 20;
  const std::uint64_t ks[] = {1, 5, 10, 20};
  auto sum = [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); };
  auto normal = [](Stream& s) { return s.normal(); };
  const auto est = chatterjee_ik(sum, normal, n, ks, 20000, 12);
  REQUIRE(est.size() == 4);
  for (const auto& e : est) {
    CAPTURE(e.k);
    CHECK(std::abs(e.estimate - linear_ik(n, e.k, 1.0)) <= 3 * e.se);
    CHECK(e.variance == doctest::Approx(double(n)).epsilon(0.05));
  }
  CHECK(linear_ik(n, 1, 2.0) == 2.0);
  CHECK(linear_ik(n, 11, 1.0) == 0.0);
  CHECK_THROWS_AS(chatterjee_ik(sum, normal, n, std::vector<std::uint64_t>{21}, 10, 1), std::invalid_argument);
}

TEST_CASE("matrix estimator") {
  ChatterjeeConfig cfg;
  cfg.n = 64;
  cfg.ks = {10, 100, 1000};
  cfg.trials = 200;
  cfg.master_seed = 6;
  cfg.validate();
  const auto recs = run_chatterjee_batch(cfg, 0, cfg.trials);
  for (const auto& r : recs) {
    CHECK(r.flags.empty());
    CHECK(ChatterjeeRecord::from_json(r.to_json()).to_json() == r.to_json());
  }
  const auto est = chatterjee_estimates(recs);
  REQUIRE(est.size() == 3);
  for (const auto& e : est) {
    CAPTURE(e.k);
    CAPTURE(e.estimate);
    CAPTURE(e.bound);
    CHECK(e.within_bound());
  }
  // Same trial, same record.
  CHECK(run_chatterjee_trial(cfg, 3).to_json() == recs[3].to_json());

  ChatterjeeConfig bad = cfg;
  bad.ks = {0, pair_count(64) + 1};
  bad.trials = 1;
  try {
    bad.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.problems().size() == 3);
  }
}
