#include "rmt/resolvent.hpp"

#include "rmt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rmt {

namespace {

using Eigen::Index;

void require_eta(cplx z) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("resolvent: need Im z > 0");
}

Eigen::VectorXcd inverse_shifts(const Eigen::VectorXd& values, cplx z) {
  Eigen::VectorXcd d(values.size());
  for (Index p = 0; p < values.size(); ++p) d[p] = 1.0 / (values[p] - z);
  return d;
}

/// y = (H - E) x via CSR.
void shifted_apply(const SymCsr& h, double energy, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  kernels::spmv_omp(h, std::span<const double>(x.data(), h.n), std::span<double>(y.data(), h.n));
  y -= energy * x;
}

/// y = ((H - E)^2 + eta^2) x.
void normal_apply(const SymCsr& h, double energy, double eta, const Eigen::VectorXd& x, Eigen::VectorXd& tmp,
                  Eigen::VectorXd& y) {
  shifted_apply(h, energy, x, tmp);
  shifted_apply(h, energy, tmp, y);
  y += eta * eta * x;
}

/// Plain CG on the SPD normal system; returns the iteration count.
int conjugate_gradient(const SymCsr& h, double energy, double eta, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                       double tol, int max_iterations) {
  const Index n = b.size();
  Eigen::VectorXd tmp(n);
  Eigen::VectorXd ap(n);
  x.setZero(n);
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  const double stop = tol * tol * b.squaredNorm();
  int it = 0;
  while (rr > stop && it < max_iterations) {
    normal_apply(h, energy, eta, p, tmp, ap);
    const double alpha = rr / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    ++it;
  }
  return it;
}

}  // namespace

SpectralResolvent::SpectralResolvent(const EigenPairs& eigs) {
  const std::size_t n = eigs.values.size();
  if (eigs.first_index != 0 || static_cast<std::size_t>(eigs.vectors.cols()) != n ||
      static_cast<std::size_t>(eigs.vectors.rows()) != n) {
    throw std::invalid_argument("SpectralResolvent needs the full eigendecomposition");
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (eigs.vector_indices[p] != p) throw std::invalid_argument("SpectralResolvent: vectors must be in order");
  }
  values_ = Eigen::Map<const Eigen::VectorXd>(eigs.values.data(), static_cast<Index>(n));
  vectors_ = eigs.vectors;
}

SpectralResolvent SpectralResolvent::from_dense(const Eigen::MatrixXd& dense, std::size_t dense_cap) {
  std::vector<std::size_t> all(static_cast<std::size_t>(dense.rows()));
  for (std::size_t p = 0; p < all.size(); ++p) all[p] = p;
  return SpectralResolvent(full_spectrum(dense, all, dense_cap));
}

SpectralResolvent SpectralResolvent::from_sparse(const SparseSymMatrix& h, std::size_t dense_cap) {
  if (h.size() > dense_cap) throw std::invalid_argument("SpectralResolvent: size exceeds the dense cap");
  return from_dense(h.dense(), dense_cap);
}

cplx SpectralResolvent::entry(std::uint32_t i, std::uint32_t j, cplx z) const {
  require_eta(z);
  cplx s = 0.0;
  for (Index p = 0; p < values_.size(); ++p) s += vectors_(i, p) * vectors_(j, p) / (values_[p] - z);
  return s;
}

Eigen::VectorXcd SpectralResolvent::column(std::uint32_t j, cplx z) const {
  require_eta(z);
  const Eigen::VectorXcd d = inverse_shifts(values_, z);
  const Eigen::VectorXd vj = vectors_.row(j).transpose();
  const Eigen::VectorXd re = vectors_ * vj.cwiseProduct(d.real());
  const Eigen::VectorXd im = vectors_ * vj.cwiseProduct(d.imag());
  Eigen::VectorXcd out(re.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

Eigen::MatrixXcd SpectralResolvent::matrix(cplx z) const {
  require_eta(z);
  const Eigen::VectorXcd d = inverse_shifts(values_, z);
  const Eigen::MatrixXd re = (vectors_ * d.real().asDiagonal()) * vectors_.transpose();
  const Eigen::MatrixXd im = (vectors_ * d.imag().asDiagonal()) * vectors_.transpose();
  Eigen::MatrixXcd out(re.rows(), re.cols());
  out.real() = re;
  out.imag() = im;
  return out;
}

Eigen::MatrixXd SpectralResolvent::im_matrix(double energy, double eta) const {
  require_eta(cplx(energy, eta));
  const Eigen::VectorXd w = kernels::im_resolvent_weights(values_, energy, eta);
  return (vectors_ * w.asDiagonal()) * vectors_.transpose();
}

cplx SpectralResolvent::stieltjes(cplx z) const {
  return rmt::stieltjes(std::span<const double>(values_.data(), size()), z);
}

cplx stieltjes(std::span<const double> eigenvalues, cplx z) {
  require_eta(z);
  cplx s = 0.0;
  for (const double lambda : eigenvalues) s += 1.0 / (lambda - z);
  return s / static_cast<double>(eigenvalues.size());
}

const Eigen::VectorXcd* ResolventProbe::column(std::uint32_t j) const {
  const auto it = std::find(column_ids.begin(), column_ids.end(), j);
  return it == column_ids.end() ? nullptr : &columns[static_cast<std::size_t>(it - column_ids.begin())];
}

Eigen::VectorXcd solve_column(const SymCsr& h, std::uint32_t j, cplx z, const ProbeOptions& options,
                              double* residual, int* iterations) {
  require_eta(z);
  if (j >= h.n) throw std::out_of_range("solve_column: index out of range");
  const auto n = static_cast<Index>(h.n);
  const double energy = z.real();
  const double eta = z.imag();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b[j] = 1.0;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b;
  Eigen::VectorXd tmp(n);
  Eigen::VectorXd ay(n);
  Eigen::VectorXd d(n);
  int total = 0;
  double res = 1.0;
  // The residual of the normal system equals the residual of (H - z) x = e_j.
  for (int refine = 0; refine < 6; ++refine) {
    total += conjugate_gradient(h, energy, eta, r, d, 0.1 * options.tol, options.max_iterations - total);
    y += d;
    normal_apply(h, energy, eta, y, tmp, ay);
    r = b - ay;
    res = r.norm();
    if (res <= options.tol) break;
    if (total >= options.max_iterations) break;
  }
  if (!(res <= options.tol)) {
    throw SolverError("resolvent column solve stalled at residual " + std::to_string(res));
  }
  if (residual != nullptr) *residual = res;
  if (iterations != nullptr) *iterations = total;
  shifted_apply(h, energy, y, tmp);
  Eigen::VectorXcd x(n);
  x.real() = tmp;
  x.imag() = eta * y;
  return x;
}

ResolventProbe probe(const SpectralResolvent& r, cplx z, std::span<const PairIndex> pairs, bool keep_columns) {
  require_eta(z);
  ResolventProbe out;
  out.z = z;
  out.pairs.assign(pairs.begin(), pairs.end());
  out.dense = true;
  for (const PairIndex& p : pairs) {
    if (p.row >= r.size() || p.col >= r.size()) throw std::out_of_range("probe: index out of range");
    out.values.push_back(r.entry(p.row, p.col, z));
  }
  out.m = r.stieltjes(z);
  if (keep_columns) {
    std::map<std::uint32_t, bool> ids;
    for (const PairIndex& p : pairs) ids[p.row] = ids[p.col] = true;
    for (const auto& [j, unused] : ids) {
      out.column_ids.push_back(j);
      out.columns.push_back(r.column(j, z));
    }
  }
  return out;
}

ResolventProbe probe(const SparseSymMatrix& h, cplx z, std::span<const PairIndex> pairs, const ProbeOptions& options) {
  require_eta(z);
  const std::size_t n = h.size();
  const SymCsr csr = h.csr();
  if (n <= options.dense_cap) {
    ResolventProbe out = probe(SpectralResolvent::from_sparse(h, options.dense_cap), z, pairs, options.keep_columns);
    // Check the kept columns against the linear system itself.
    Eigen::VectorXd re(static_cast<Index>(n));
    Eigen::VectorXd im(static_cast<Index>(n));
    for (std::size_t c = 0; c < out.columns.size(); ++c) {
      const Eigen::VectorXd xr = out.columns[c].real();
      const Eigen::VectorXd xi = out.columns[c].imag();
      kernels::spmv_omp(csr, std::span<const double>(xr.data(), n), std::span<double>(re.data(), n));
      kernels::spmv_omp(csr, std::span<const double>(xi.data(), n), std::span<double>(im.data(), n));
      Eigen::VectorXcd res(static_cast<Index>(n));
      res.real() = re - z.real() * xr + z.imag() * xi;
      res.imag() = im - z.real() * xi - z.imag() * xr;
      res[out.column_ids[c]] -= 1.0;
      out.max_solve_residual = std::max(out.max_solve_residual, res.norm());
    }
    if (out.max_solve_residual > options.tol) {
      throw SolverError("dense resolvent column misses the system by " + std::to_string(out.max_solve_residual));
    }
    return out;
  }
  ResolventProbe out;
  out.z = z;
  out.pairs.assign(pairs.begin(), pairs.end());
  out.dense = false;
  std::map<std::uint32_t, bool> ids;
  for (const PairIndex& p : pairs) {
    if (p.row >= n || p.col >= n) throw std::out_of_range("probe: index out of range");
    ids[p.col] = true;
    if (options.keep_columns) ids[p.row] = true;
  }
  for (const auto& [j, unused] : ids) {
    double res = 0.0;
    out.column_ids.push_back(j);
    out.columns.push_back(solve_column(csr, j, z, options, &res));
    out.max_solve_residual = std::max(out.max_solve_residual, res);
  }
  bool full_diagonal = true;
  std::vector<bool> seen(n, false);
  for (const PairIndex& p : pairs) {
    out.values.push_back((*out.column(p.col))[p.row]);
    if (p.row == p.col) seen[p.row] = true;
  }
  for (const bool s : seen) full_diagonal = full_diagonal && s;
  if (full_diagonal) {
    cplx sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += (*out.column(static_cast<std::uint32_t>(i)))[static_cast<Index>(i)];
    out.m = sum / static_cast<double>(n);
  }
  if (!options.keep_columns) {
    out.column_ids.clear();
    out.columns.clear();
  }
  return out;
}

double ward_check(const ResolventProbe& p) {
  const double eta = p.z.imag();
  double worst = 0.0;
  for (const PairIndex& pair : p.pairs) {
    const Eigen::VectorXcd* ri = p.column(pair.row);
    const Eigen::VectorXcd* rj = p.column(pair.col);
    if (ri == nullptr || rj == nullptr) throw std::invalid_argument("ward_check: probe lacks the needed rows");
    // R is symmetric, so row i is column i.
    const cplx lhs = (ri->array() * rj->array().conjugate()).sum();
    const double im_rij = (*rj)[pair.row].imag();
    const double rhs = im_rij / eta;
    // Relative to the Cauchy-Schwarz scale, since Im R_ij itself may vanish.
    const double scale = std::sqrt((*ri)[pair.row].imag() * (*rj)[pair.col].imag()) / eta;
    worst = std::max(worst, std::abs(lhs - rhs) / (scale + 1e-300));
  }
  return worst;
}

double local_law_bound(std::size_t n, double q, double kappa, double eta) {
  const double base = 1.0 / (static_cast<double>(n) * eta) + 1.0 / (q * q * q);
  return base + std::pow(std::abs(kappa) + eta, 0.25) * std::sqrt(base);
}

std::vector<LawResidual> local_law_residual(std::span<const double> eigenvalues, const EdgeModel& model,
                                            std::span<const GridPoint> grid) {
  if (!(model.q > 0.0)) throw std::invalid_argument("local_law_residual: model needs q > 0");
  const double edge = edge_location(model);
  std::vector<LawResidual> out;
  out.reserve(grid.size());
  for (const GridPoint& g : grid) {
    const cplx z(edge + g.kappa, g.eta);
    LawResidual row;
    row.kappa = g.kappa;
    row.eta = g.eta;
    row.m = stieltjes(eigenvalues, z);
    row.m_model = m_star(z, model);
    row.residual = std::abs(row.m - row.m_model);
    row.bound = local_law_bound(eigenvalues.size(), model.q, g.kappa, g.eta);
    out.push_back(row);
  }
  return out;
}

double edge_eta(std::size_t n, double delta) { return std::pow(static_cast<double>(n), -2.0 / 3.0 - delta); }

std::vector<double> edge_window(double edge, std::size_t n, double delta, std::size_t points) {
  if (points < 2) return {edge};
  const double half = std::pow(static_cast<double>(n), -2.0 / 3.0 + delta);
  std::vector<double> out(points);
  for (std::size_t t = 0; t < points; ++t) {
    out[t] = edge - half + 2.0 * half * static_cast<double>(t) / static_cast<double>(points - 1);
  }
  return out;
}

EntryLawStats entry_law_residual(const SpectralResolvent& r, double edge, double q, double delta,
                                 std::size_t points) {
  const std::size_t n = r.size();
  const double nn = static_cast<double>(n);
  EntryLawStats out;
  out.eta = edge_eta(n, delta);
  double off_im = 0.0;
  double diag_im = 0.0;
  std::size_t count = 0;
  for (const double energy : edge_window(edge, n, delta, points)) {
    const Eigen::MatrixXcd rz = r.matrix(cplx(energy, out.eta));
    double off_sum = 0.0;
    for (Index j = 0; j < rz.cols(); ++j) {
      for (Index i = 0; i < rz.rows(); ++i) {
        const double dev = std::abs(std::abs(rz(i, j)) - (i == j ? 1.0 : 0.0));
        out.max_abs_dev = std::max(out.max_abs_dev, dev);
        out.max_im = std::max(out.max_im, std::abs(rz(i, j).imag()));
        if (i != j) off_sum += rz(i, j).imag();
      }
    }
    off_im += off_sum / (nn * (nn - 1.0));
    diag_im += rz.diagonal().imag().mean();
    ++count;
  }
  out.mean_offdiag_im = off_im / static_cast<double>(count);
  out.mean_diag_im = diag_im / static_cast<double>(count);
  out.normalized_abs = out.max_abs_dev / (1.0 / q + 1.0 / (nn * out.eta));
  out.normalized_im = out.max_im * nn * out.eta;
  return out;
}

double eigvec_link_residual(const SpectralResolvent& r, double delta) {
  const std::size_t n = r.size();
  const double eta = edge_eta(n, delta);
  const Eigen::VectorXd w = eta * kernels::im_resolvent_weights(r.values(), r.values()[0], eta);
  const Eigen::MatrixXd top = r.vectors().col(0);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  return static_cast<double>(n) * kernels::max_abs_diff_weighted_gram_omp(r.vectors(), w, top, one);
}

DetectionReport detect_top_from_resolvent(const SpectralResolvent& r, double energy, double eta) {
  require_eta(cplx(energy, eta));
  const std::size_t n = r.size();
  const Eigen::VectorXd w = kernels::im_resolvent_weights(r.values(), energy, eta);
  const Eigen::VectorXd diag = kernels::weighted_gram_diagonal_omp(r.vectors(), w);
  Index best = 0;
  const double im_max = diag.maxCoeff(&best);
  const double rhs = 2.0 * static_cast<double>(n) / eta * im_max;
  DetectionReport out;
  out.witness = static_cast<std::uint32_t>(best);
  out.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    const double dist = std::max(eta, std::abs(r.values()[static_cast<Index>(j)] - energy));
    const double lhs = 1.0 / (dist * dist);
    out.min_margin = std::min(out.min_margin, rhs / lhs);
    if (!(lhs <= rhs)) {
      out.holds = false;
      out.failing.push_back(j);
    }
  }
  return out;
}

DriftWindow drift_window(double edge, std::size_t n, double delta, std::size_t points) {
  return {edge_window(edge, n, delta, points), edge_eta(n, delta)};
}

double resolvent_drift(const SpectralResolvent& r, const SpectralResolvent& rk, const DriftWindow& window) {
  if (r.size() != rk.size()) throw std::invalid_argument("resolvent_drift: size mismatch");
  const double scale = static_cast<double>(r.size()) * window.eta;
  double worst = 0.0;
  for (const double energy : window.energies) {
    const Eigen::VectorXd w = kernels::im_resolvent_weights(r.values(), energy, window.eta);
    const Eigen::VectorXd wk = kernels::im_resolvent_weights(rk.values(), energy, window.eta);
    worst = std::max(worst, kernels::max_abs_diff_weighted_gram_omp(r.vectors(), w, rk.vectors(), wk));
  }
  return scale * worst;
}

Lambda1Drift lambda1_drift(double lambda1, double lambda1_k, std::size_t n, double delta) {
  const double drift = std::abs(lambda1 - lambda1_k);
  return {drift, drift * std::pow(static_cast<double>(n), 2.0 / 3.0 + delta)};
}

void write_law_csv(std::ostream& os, std::span<const LawResidual> rows, const std::vector<std::string>& header) {
  for (const std::string& line : header) os << "# " << line << '\n';
  os << "kappa,eta,residual,bound\n";
  for (const LawResidual& r : rows) {
    os << format_double(r.kappa) << ',' << format_double(r.eta) << ',' << format_double(r.residual) << ','
       << format_double(r.bound) << '\n';
  }
}

}  // namespace rmt
