#include <doctest.h>

#include "rmt/kernels.hpp"
#include "support.hpp"

#include <omp.h>

#include <vector>

using namespace rmt;

TEST_CASE("spmv matches the dense product and its serial twin") {
  for (std::size_t n : {std::size_t(7), std::size_t(64), std::size_t(5000)}) {
    const auto h = testing::draw(n, 2.0, n);
    const SymCsr csr = h.csr();
    Stream rng(n + 1);
    std::vector<double> x(n), ys(n), yo(n);
    for (double& v : x) v = rng.normal();
    kernels::spmv_serial(csr, x, ys);
    for (int threads : {1, 2, 4}) {
      omp_set_num_threads(threads);
      kernels::spmv_omp(csr, x, yo);
      CHECK(yo == ys);
    }
    if (n <= 64) {
      const Eigen::VectorXd ref = h.dense() * Eigen::Map<const Eigen::VectorXd>(x.data(), Eigen::Index(n));
      for (std::size_t i = 0; i < n; ++i) CHECK(ys[i] == doctest::Approx(ref(Eigen::Index(i))).epsilon(1e-13));
    }
  }
  std::vector<double> wrong(3);
  const SymCsr csr = testing::draw(8, 2.0, 1).csr();
  CHECK_THROWS_AS(kernels::spmv_serial(csr, wrong, wrong), std::invalid_argument);
}

TEST_CASE("weighted gram kernels") {
  Stream rng(3);
  const Eigen::Index n = 150;
  Eigen::MatrixXd v1(n, n), v2(n, n);
  for (auto& x : v1.reshaped()) x = rng.normal();
  for (auto& x : v2.reshaped()) x = rng.normal();
  Eigen::VectorXd values1(n), values2(n);
  for (auto& x : values1) x = rng.normal();
  for (auto& x : values2) x = rng.normal();
  const Eigen::VectorXd w1 = kernels::im_resolvent_weights(values1, 0.3, 0.01);
  const Eigen::VectorXd w2 = kernels::im_resolvent_weights(values2, 0.3, 0.01);
  CHECK(w1(0) == doctest::Approx(0.01 / ((values1(0) - 0.3) * (values1(0) - 0.3) + 1e-4)));

  const Eigen::MatrixXd g1 = v1 * w1.asDiagonal() * v1.transpose();
  const Eigen::MatrixXd g2 = v2 * w2.asDiagonal() * v2.transpose();
  const double ref = (g1 - g2).cwiseAbs().maxCoeff();
  const double serial = kernels::max_abs_diff_weighted_gram_serial(v1, w1, v2, w2);
  CHECK(serial == doctest::Approx(ref).epsilon(1e-12));
  for (int threads : {1, 3}) {
    omp_set_num_threads(threads);
    const double par = kernels::max_abs_diff_weighted_gram_omp(v1, w1, v2, w2);
    CHECK(par == doctest::Approx(serial).epsilon(1e-12));
    // The parallel result does not depend on the thread count.
    omp_set_num_threads(1);
    CHECK(kernels::max_abs_diff_weighted_gram_omp(v1, w1, v2, w2) == par);
  }

  const Eigen::VectorXd ds = kernels::weighted_gram_diagonal_serial(v1, w1);
  omp_set_num_threads(4);
  const Eigen::VectorXd dp = kernels::weighted_gram_diagonal_omp(v1, w1);
  omp_set_num_threads(1);
  CHECK((ds - dp).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds - g1.diagonal()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(kernels::max_abs_diff_weighted_gram_serial(v1, w1, v2.leftCols(3), w2), std::invalid_argument);
}
