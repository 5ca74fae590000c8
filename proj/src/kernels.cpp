#include "rmt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmt::kernels {

namespace {

constexpr Eigen::Index kRowBlock = 64;

void check_spmv(const SymCsr& a, std::span<const double> x, std::span<double> y) {
  if (x.size() != a.n || y.size() != a.n) throw std::invalid_argument("spmv: size mismatch");
}

void check_gram(const Eigen::MatrixXd& v1, const Eigen::VectorXd& w1, const Eigen::MatrixXd& v2,
                const Eigen::VectorXd& w2) {
  if (v1.rows() != v2.rows() || v1.cols() != w1.size() || v2.cols() != w2.size()) {
    throw std::invalid_argument("weighted gram: shape mismatch");
  }
}

}  // namespace

void spmv_serial(const SymCsr& a, std::span<const double> x, std::span<double> y) {
  check_spmv(a, x, y);
  for (std::size_t i = 0; i < a.n; ++i) {
    double s = 0.0;
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) s += a.val[p] * x[a.col[p]];
    y[i] = s;
  }
}

void spmv_omp(const SymCsr& a, std::span<const double> x, std::span<double> y) {
  check_spmv(a, x, y);
  const auto n = static_cast<std::ptrdiff_t>(a.n);
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) s += a.val[p] * x[a.col[p]];
    y[i] = s;
  }
}

Eigen::VectorXd im_resolvent_weights(const Eigen::VectorXd& values, double energy, double eta) {
  Eigen::VectorXd w(values.size());
  for (Eigen::Index p = 0; p < values.size(); ++p) {
    const double d = values[p] - energy;
    w[p] = eta / (d * d + eta * eta);
  }
  return w;
}

double max_abs_diff_weighted_gram_serial(const Eigen::MatrixXd& v1, const Eigen::VectorXd& w1,
                                         const Eigen::MatrixXd& v2, const Eigen::VectorXd& w2) {
  check_gram(v1, w1, v2, w2);
  const Eigen::Index n = v1.rows();
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double a = 0.0;
      for (Eigen::Index p = 0; p < v1.cols(); ++p) a += v1(i, p) * w1[p] * v1(j, p);
      double b = 0.0;
      for (Eigen::Index p = 0; p < v2.cols(); ++p) b += v2(i, p) * w2[p] * v2(j, p);
      best = std::max(best, std::abs(a - b));
    }
  }
  return best;
}

double max_abs_diff_weighted_gram_omp(const Eigen::MatrixXd& v1, const Eigen::VectorXd& w1,
                                      const Eigen::MatrixXd& v2, const Eigen::VectorXd& w2) {
  check_gram(v1, w1, v2, w2);
  const Eigen::Index n = v1.rows();
  // Columns scaled by w keep the product a plain GEMM.
  const Eigen::MatrixXd s1 = v1 * w1.asDiagonal();
  const Eigen::MatrixXd s2 = v2 * w2.asDiagonal();
  const Eigen::Index blocks = (n + kRowBlock - 1) / kRowBlock;
  double best = 0.0;
#pragma omp parallel for schedule(dynamic) reduction(max : best)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index r0 = b * kRowBlock;
    const Eigen::Index rows = std::min(kRowBlock, n - r0);
    Eigen::MatrixXd block = s1.middleRows(r0, rows) * v1.transpose();
    block.noalias() -= s2.middleRows(r0, rows) * v2.transpose();
    best = std::max(best, block.cwiseAbs().maxCoeff());
  }
  return best;
}

Eigen::VectorXd weighted_gram_diagonal_serial(const Eigen::MatrixXd& v, const Eigen::VectorXd& w) {
  if (v.cols() != w.size()) throw std::invalid_argument("weighted gram: shape mismatch");
  Eigen::VectorXd d(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index p = 0; p < v.cols(); ++p) s += v(i, p) * v(i, p) * w[p];
    d[i] = s;
  }
  return d;
}

Eigen::VectorXd weighted_gram_diagonal_omp(const Eigen::MatrixXd& v, const Eigen::VectorXd& w) {
  if (v.cols() != w.size()) throw std::invalid_argument("weighted gram: shape mismatch");
  const Eigen::Index n = v.rows();
  Eigen::VectorXd d(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index p = 0; p < v.cols(); ++p) s += v(i, p) * v(i, p) * w[p];
    d[i] = s;
  }
  return d;
}

}  // namespace rmt::kernels
