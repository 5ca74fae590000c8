#pragma once

// Data-parallel kernels. Each OpenMP kernel has a serial reference twin kept
// for testing and benchmarking. OpenMP results do not depend on the thread
// count: work is split into fixed blocks and only exact reductions (max) are
// shared across threads.

#include "rmt/sparse_matrix.hpp"

#include <Eigen/Dense>

#include <span>

namespace rmt::kernels {

/// y = A x for a full symmetric CSR.
void spmv_serial(const SymCsr& a, std::span<const double> x, std::span<double> y);
void spmv_omp(const SymCsr& a, std::span<const double> x, std::span<double> y);

/// Spectral weights of Im R(E + i eta) = V diag(w) V^T with
/// w_p = eta / ((lambda_p - E)^2 + eta^2).
Eigen::VectorXd im_resolvent_weights(const Eigen::VectorXd& values, double energy, double eta);

/// max_ij |(V1 diag(w1) V1^T - V2 diag(w2) V2^T)_ij|.
double max_abs_diff_weighted_gram_serial(const Eigen::MatrixXd& v1, const Eigen::VectorXd& w1,
                                         const Eigen::MatrixXd& v2, const Eigen::VectorXd& w2);
double max_abs_diff_weighted_gram_omp(const Eigen::MatrixXd& v1, const Eigen::VectorXd& w1,
                                      const Eigen::MatrixXd& v2, const Eigen::VectorXd& w2);

/// Diagonal of V diag(w) V^T.
Eigen::VectorXd weighted_gram_diagonal_serial(const Eigen::MatrixXd& v, const Eigen::VectorXd& w);
Eigen::VectorXd weighted_gram_diagonal_omp(const Eigen::MatrixXd& v, const Eigen::VectorXd& w);

}  // namespace rmt::kernels
