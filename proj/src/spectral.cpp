#include "rmt/spectral.hpp"

#include "rmt/kernels.hpp"
#include "rmt/rng.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace rmt {

namespace {

using Eigen::Index;

void check_lapack(lapack_int info, const char* routine) {
  if (info != 0) throw ConvergenceError(std::string(routine) + " failed with info = " + std::to_string(info));
}

/// Ascending LAPACK output -> descending order.
template <typename Vec>
std::vector<double> descending(const Vec& ascending, Index count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = ascending[count - 1 - i];
  return out;
}

/// Eigenpairs with ascending LAPACK indices il..iu (1-based, inclusive).
void lapack_range(const Eigen::MatrixXd& dense, lapack_int il, lapack_int iu, bool want_vectors,
                  Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  const auto n = static_cast<lapack_int>(dense.rows());
  Eigen::MatrixXd a = dense;
  const lapack_int count = iu - il + 1;
  values.resize(n);
  vectors.resize(n, want_vectors ? count : 1);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(std::max(count, 1)));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'I', 'U', n, a.data(), n, 0.0,
                                         0.0, il, iu, 0.0, &found, values.data(), vectors.data(), n, support.data());
  check_lapack(info, "dsyevr");
  if (found != count) throw ConvergenceError("dsyevr returned an unexpected number of eigenpairs");
  values.conservativeResize(count);
}

}  // namespace

double EigenPairs::value(std::size_t index) const {
  if (index < first_index || index >= first_index + values.size()) {
    throw std::out_of_range("eigenvalue index " + std::to_string(index) + " was not computed");
  }
  return values[index - first_index];
}

Eigen::VectorXd EigenPairs::vector(std::size_t index) const {
  const auto it = std::find(vector_indices.begin(), vector_indices.end(), index);
  if (it == vector_indices.end()) throw std::out_of_range("eigenvector " + std::to_string(index) + " was not computed");
  return vectors.col(it - vector_indices.begin());
}

SymOperator make_operator(const SymCsr& csr) {
  return {csr.n, [&csr](std::span<const double> x, std::span<double> y) { kernels::spmv_omp(csr, x, y); }};
}

SymOperator make_operator(const CenteredEr& centered, const SymCsr& adjacency_csr) {
  return {centered.size(), [&centered, &adjacency_csr](std::span<const double> x, std::span<double> y) {
            centered.apply(adjacency_csr, x, y);
          }};
}

void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Index best = 0;
  double mag = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > mag) {
      mag = std::abs(v[i]);
      best = i;
    }
  }
  if (v.size() > 0 && v[best] < 0.0) v = -v;
}

EigenPairs full_spectrum(const Eigen::MatrixXd& dense, std::span<const std::size_t> vector_indices,
                         std::size_t dense_cap) {
  const auto n = static_cast<std::size_t>(dense.rows());
  if (dense.rows() != dense.cols()) throw std::invalid_argument("full_spectrum: matrix is not square");
  if (n > dense_cap) {
    throw std::invalid_argument("full_spectrum: n = " + std::to_string(n) + " exceeds the dense cap " +
                                std::to_string(dense_cap));
  }
  for (const std::size_t idx : vector_indices) {
    if (idx >= n) throw std::out_of_range("full_spectrum: eigenvector index out of range");
  }
  EigenPairs out;
  out.method = EigenMethod::dense_full;
  out.vector_indices.assign(vector_indices.begin(), vector_indices.end());
  const auto ln = static_cast<lapack_int>(n);
  if (vector_indices.size() * 4 > n) {
    Eigen::MatrixXd a = dense;
    Eigen::VectorXd w(static_cast<Index>(n));
    check_lapack(LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', ln, a.data(), ln, w.data()), "dsyevd");
    out.values = descending(w, static_cast<Index>(n));
    out.vectors.resize(static_cast<Index>(n), static_cast<Index>(vector_indices.size()));
    for (std::size_t c = 0; c < vector_indices.size(); ++c) {
      out.vectors.col(static_cast<Index>(c)) = a.col(static_cast<Index>(n - 1 - vector_indices[c]));
    }
  } else {
    Eigen::MatrixXd a = dense;
    Eigen::VectorXd w(static_cast<Index>(n));
    check_lapack(LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'U', ln, a.data(), ln, w.data()), "dsyevd");
    out.values = descending(w, static_cast<Index>(n));
    out.vectors.resize(static_cast<Index>(n), static_cast<Index>(vector_indices.size()));
    if (!vector_indices.empty()) {
      const auto [lo, hi] = std::minmax_element(vector_indices.begin(), vector_indices.end());
      // Descending index d is ascending (1-based) index n - d.
      const auto il = static_cast<lapack_int>(n - *hi);
      const auto iu = static_cast<lapack_int>(n - *lo);
      Eigen::VectorXd rv;
      Eigen::MatrixXd rz;
      lapack_range(dense, il, iu, true, rv, rz);
      for (std::size_t c = 0; c < vector_indices.size(); ++c) {
        const auto col = static_cast<Index>(n - vector_indices[c]) - il;
        out.vectors.col(static_cast<Index>(c)) = rz.col(col);
        out.values[vector_indices[c]] = rv[col];
      }
    }
  }
  for (Index c = 0; c < out.vectors.cols(); ++c) canonicalize_sign(out.vectors.col(c));
  return out;
}

EigenPairs full_spectrum(const SparseSymMatrix& h, std::span<const std::size_t> vector_indices,
                         std::size_t dense_cap) {
  if (h.size() > dense_cap) {
    throw std::invalid_argument("full_spectrum: n = " + std::to_string(h.size()) + " exceeds the dense cap " +
                                std::to_string(dense_cap));
  }
  return full_spectrum(h.dense(), vector_indices, dense_cap);
}

EigenPairs dense_extreme(const Eigen::MatrixXd& dense, std::size_t m, Which which) {
  const auto n = static_cast<std::size_t>(dense.rows());
  if (m == 0 || m > n) throw std::invalid_argument("dense_extreme: need 1 <= m <= n");
  const auto ln = static_cast<lapack_int>(n);
  const auto lm = static_cast<lapack_int>(m);
  const lapack_int il = which == Which::largest ? ln - lm + 1 : 1;
  const lapack_int iu = which == Which::largest ? ln : lm;
  Eigen::VectorXd w;
  Eigen::MatrixXd z;
  lapack_range(dense, il, iu, true, w, z);
  EigenPairs out;
  out.method = EigenMethod::dense_range;
  out.values = descending(w, lm);
  out.first_index = which == Which::largest ? 0 : n - m;
  out.vectors.resize(static_cast<Index>(n), lm);
  for (std::size_t c = 0; c < m; ++c) {
    out.vectors.col(static_cast<Index>(c)) = z.col(lm - 1 - static_cast<Index>(c));
    out.vector_indices.push_back(out.first_index + c);
    canonicalize_sign(out.vectors.col(static_cast<Index>(c)));
  }
  return out;
}

EigenPairs top_eigs(const SymOperator& op, std::size_t m, Which which, const Eigen::MatrixXd* warm_start,
                    const LanczosOptions& options) {
  const auto n = static_cast<Index>(op.n);
  if (m == 0 || static_cast<Index>(m) > n) throw std::invalid_argument("top_eigs: need 1 <= m <= n");
  const Index basis_cap = std::min<Index>(n, std::max<Index>(static_cast<Index>(options.max_basis),
                                                             static_cast<Index>(2 * m + 20)));
  const double sign = which == Which::largest ? 1.0 : -1.0;
  const auto mi = static_cast<Index>(m);
  const Index keep = std::min<Index>(basis_cap / 2, std::max<Index>(mi + 10, 2 * mi));

  Eigen::MatrixXd basis(n, basis_cap + 1);
  Eigen::MatrixXd projected = Eigen::MatrixXd::Zero(basis_cap, basis_cap);
  Eigen::VectorXd w(n);
  Stream rng(options.seed);
  int matvecs = 0;

  auto apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    op.apply(std::span<const double>(x.data(), static_cast<std::size_t>(n)),
             std::span<double>(y.data(), static_cast<std::size_t>(n)));
    if (sign < 0.0) y = -y;
    ++matvecs;
  };
  // Orthogonalizes x against the first `cols` basis vectors (twice) and
  // returns the accumulated coefficients.
  auto orthogonalize = [&](Eigen::VectorXd& x, Index cols) {
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(cols);
    for (int pass = 0; pass < 2 && cols > 0; ++pass) {
      const Eigen::VectorXd c = basis.leftCols(cols).transpose() * x;
      x.noalias() -= basis.leftCols(cols) * c;
      coeff += c;
    }
    return coeff;
  };
  auto random_unit_orthogonal = [&](Index cols) {
    Eigen::VectorXd x(n);
    for (int attempt = 0; attempt < 8; ++attempt) {
      for (Index i = 0; i < n; ++i) x[i] = rng.normal();
      orthogonalize(x, cols);
      const double norm = x.norm();
      if (norm > 1e-8) return Eigen::VectorXd(x / norm);
    }
    throw ConvergenceError("top_eigs: could not extend the Krylov basis");
  };

  // Start vector.
  Eigen::VectorXd start(n);
  if (warm_start != nullptr && warm_start->rows() == n && warm_start->cols() > 0) {
    start = warm_start->rowwise().sum();
  } else {
    for (Index i = 0; i < n; ++i) start[i] = rng.normal();
  }
  if (start.norm() < 1e-300) start = random_unit_orthogonal(0);
  basis.col(0) = start / start.norm();

  Index size = 0;        // current basis vectors with filled projected columns
  Index next_check = mi + 4;
  int restarts = 0;
  double spectral_scale = 0.0;
  while (true) {
    // Expand.
    while (size < basis_cap) {
      Eigen::VectorXd v = basis.col(size);
      apply(v, w);
      const Eigen::VectorXd h = orthogonalize(w, size + 1);
      projected.block(0, size, size + 1, 1) = h;
      projected.block(size, 0, 1, size + 1) = h.transpose();
      spectral_scale = std::max(spectral_scale, std::abs(h[size]));
      double beta = w.norm();
      ++size;
      if (size == n) {
        beta = 0.0;
        basis.col(size) = Eigen::VectorXd::Zero(n);
        break;
      }
      if (beta <= 1e-13 * std::max(1.0, spectral_scale)) {
        // Invariant subspace: continue from a fresh direction with zero coupling.
        basis.col(size) = random_unit_orthogonal(size);
        w.setZero();
        beta = 0.0;
      } else {
        basis.col(size) = w / beta;
      }
      if (size >= next_check || size == basis_cap) break;
    }

    // Rayleigh-Ritz on the current basis.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(projected.topLeftCorner(size, size));
    if (ritz.info() != Eigen::Success) throw ConvergenceError("top_eigs: Ritz problem failed");
    // Residual coupling of the last basis vector.
    Eigen::VectorXd last = w;
    const double beta = last.norm();
    bool converged = size >= mi;
    if (converged) {
      for (Index c = 0; c < mi; ++c) {
        const Index col = size - 1 - c;
        const double theta = ritz.eigenvalues()[col];
        const double res = size == n ? 0.0 : beta * std::abs(ritz.eigenvectors()(size - 1, col));
        if (res > options.tol * std::max(1.0, std::abs(theta))) {
          converged = false;
          break;
        }
      }
    }
    if (converged) {
      EigenPairs out;
      out.method = EigenMethod::iterative_topm;
      out.matvecs = matvecs;
      out.first_index = which == Which::largest ? 0 : static_cast<std::size_t>(n) - m;
      out.vectors.resize(n, mi);
      std::vector<double> vals(m);
      for (Index c = 0; c < mi; ++c) {
        const Index col = size - 1 - c;
        vals[static_cast<std::size_t>(c)] = sign * ritz.eigenvalues()[col];
        Eigen::VectorXd y = basis.leftCols(size) * ritz.eigenvectors().col(col);
        y /= y.norm();
        canonicalize_sign(y);
        out.vectors.col(c) = y;
      }
      if (which == Which::smallest) {
        // Smallest first internally; report in descending global order.
        std::reverse(vals.begin(), vals.end());
        out.vectors = out.vectors.rowwise().reverse().eval();
      }
      out.values = std::move(vals);
      for (std::size_t c = 0; c < m; ++c) out.vector_indices.push_back(out.first_index + c);
      return out;
    }
    if (size < basis_cap) {
      next_check = std::min<Index>(basis_cap, std::max<Index>(size + 5, static_cast<Index>(size * 1.15)));
      continue;
    }
    // Thick restart: keep the leading Ritz vectors, continue from the residual direction.
    if (++restarts > options.max_restarts) {
      throw ConvergenceError("top_eigs: no convergence after " + std::to_string(matvecs) + " products");
    }
    const Eigen::MatrixXd s = ritz.eigenvectors().rightCols(keep);
    const Eigen::MatrixXd kept = basis.leftCols(size) * s;
    const Eigen::VectorXd residual_dir = basis.col(size);
    basis.leftCols(keep) = kept;
    basis.col(keep) = residual_dir;
    projected.setZero();
    projected.topLeftCorner(keep, keep) = ritz.eigenvalues().tail(keep).asDiagonal();
    size = keep;
    next_check = std::min<Index>(basis_cap, keep + 10);
  }
}

double overlap(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size()) throw std::invalid_argument("overlap: length mismatch");
  if (std::equal(v.begin(), v.end(), w.begin())) return 1.0;
  if (std::equal(v.begin(), v.end(), w.begin(), [](double a, double b) { return a == -b; })) return 1.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * w[i];
  return std::min(1.0, std::abs(dot));
}

double overlap(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  return overlap(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                 std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
}

double aligned_inf_dist(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size()) throw std::invalid_argument("aligned_inf_dist: length mismatch");
  double plus = 0.0;
  double minus = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    plus = std::max(plus, std::abs(v[i] - w[i]));
    minus = std::max(minus, std::abs(v[i] + w[i]));
  }
  return std::sqrt(static_cast<double>(v.size())) * std::min(plus, minus);
}

double aligned_inf_dist(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  return aligned_inf_dist(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                          std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
}

double delocalization_stat(const Eigen::MatrixXd& vectors) {
  if (vectors.size() == 0) return 0.0;
  return std::sqrt(static_cast<double>(vectors.rows())) * vectors.cwiseAbs().maxCoeff();
}

GapStats gap_stats(const EigenPairs& eigs, std::span<const std::size_t> indices) {
  GapStats out;
  out.n = eigs.first_index + eigs.values.size();
  for (const std::size_t i : indices) {
    if (i < eigs.first_index || i + 1 >= eigs.first_index + eigs.values.size()) {
      throw std::out_of_range("gap_stats: index " + std::to_string(i) + " has no computed successor");
    }
    out.gaps.push_back(std::max(0.0, eigs.value(i) - eigs.value(i + 1)));
  }
  return out;
}

double max_relative_residual(const SymOperator& op, const EigenPairs& eigs) {
  double worst = 0.0;
  Eigen::VectorXd y(static_cast<Index>(op.n));
  for (std::size_t c = 0; c < eigs.vector_indices.size(); ++c) {
    const Eigen::VectorXd v = eigs.vectors.col(static_cast<Index>(c));
    op.apply(std::span<const double>(v.data(), op.n), std::span<double>(y.data(), op.n));
    const double lambda = eigs.value(eigs.vector_indices[c]);
    worst = std::max(worst, (y - lambda * v).norm() / std::max(1.0, std::abs(lambda)));
  }
  return worst;
}

}  // namespace rmt
