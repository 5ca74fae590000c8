#pragma once

#include "rmt/edge_model.hpp"
#include "rmt/sparse_matrix.hpp"
#include "rmt/spectral.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmt {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// R(z) = V diag(1 / (lambda - z)) V^T from a full eigendecomposition.
class SpectralResolvent {
 public:
  /// `eigs` must carry every eigenvalue and every eigenvector.
  explicit SpectralResolvent(const EigenPairs& eigs);
  static SpectralResolvent from_dense(const Eigen::MatrixXd& dense, std::size_t dense_cap = kDefaultDenseCap);
  static SpectralResolvent from_sparse(const SparseSymMatrix& h, std::size_t dense_cap = kDefaultDenseCap);

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }    // descending
  [[nodiscard]] const Eigen::MatrixXd& vectors() const noexcept { return vectors_; }  // column p <-> values_[p]

  [[nodiscard]] cplx entry(std::uint32_t i, std::uint32_t j, cplx z) const;
  [[nodiscard]] Eigen::VectorXcd column(std::uint32_t j, cplx z) const;
  [[nodiscard]] Eigen::MatrixXcd matrix(cplx z) const;
  /// Im R(E + i eta), real symmetric.
  [[nodiscard]] Eigen::MatrixXd im_matrix(double energy, double eta) const;
  /// m(z) = (1/N) sum_p 1 / (lambda_p - z).
  [[nodiscard]] cplx stieltjes(cplx z) const;

 private:
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
};

/// m(z) straight from eigenvalues.
cplx stieltjes(std::span<const double> eigenvalues, cplx z);

struct ProbeOptions {
  std::size_t dense_cap = kDefaultDenseCap;
  /// Keep the full columns R e_j of every probed j (needed by ward_check).
  bool keep_columns = true;
  double tol = 1e-9;
  int max_iterations = 200000;
};

struct ResolventProbe {
  cplx z;
  std::vector<PairIndex> pairs;  // (i, j) as requested
  std::vector<cplx> values;      // R_ij(z)
  std::optional<cplx> m;         // m(z) when it could be formed
  std::vector<std::uint32_t> column_ids;
  std::vector<Eigen::VectorXcd> columns;  // R e_j for j in column_ids
  double max_solve_residual = 0.0;        // max ||(H - z) R e_j - e_j||_2
  bool dense = true;

  [[nodiscard]] const Eigen::VectorXcd* column(std::uint32_t j) const;
};

/// Entries R_ij(z). Dense spectral path up to the cap, otherwise each needed
/// column solves ((H - E)^2 + eta^2) y = e_j by conjugate gradients with
/// refinement and sets R e_j = (H - E) y + i eta y.
ResolventProbe probe(const SparseSymMatrix& h, cplx z, std::span<const PairIndex> pairs,
                     const ProbeOptions& options = {});
ResolventProbe probe(const SpectralResolvent& r, cplx z, std::span<const PairIndex> pairs, bool keep_columns = true);

/// Column R e_j above the dense cap (matrix-free).
Eigen::VectorXcd solve_column(const SymCsr& h, std::uint32_t j, cplx z, const ProbeOptions& options,
                              double* residual = nullptr, int* iterations = nullptr);

/// max over probed (i, j) of |sum_l R_il conj(R_jl) - Im R_ij / eta|, relative to
/// sqrt(Im R_ii Im R_jj) / eta.
double ward_check(const ResolventProbe& p);

/// Grid point w = kappa + i eta relative to the edge.
struct GridPoint {
  double kappa = 0.0;
  double eta = 0.0;
};

struct LawResidual {
  double kappa = 0.0;
  double eta = 0.0;
  cplx m;
  cplx m_model;
  double residual = 0.0;  // |m - m_star| at edge + w
  double bound = 0.0;     // 1/(N eta) + 1/q^3 + (|kappa| + eta)^{1/4} (1/(N eta) + 1/q^3)^{1/2}
};

double local_law_bound(std::size_t n, double q, double kappa, double eta);

/// |m(edge + w) - m_star(edge + w)| over the grid, edge = edge_location(model).
std::vector<LawResidual> local_law_residual(std::span<const double> eigenvalues, const EdgeModel& model,
                                            std::span<const GridPoint> grid);

/// Energies of the edge window |E - edge| <= N^{-2/3 + delta}: `points` evenly spaced values.
std::vector<double> edge_window(double edge, std::size_t n, double delta, std::size_t points = 17);
/// eta = N^{-2/3 - delta}.
double edge_eta(std::size_t n, double delta);

struct EntryLawStats {
  double max_abs_dev = 0.0;     // max_ij ||R_ij| - delta_ij|
  double max_im = 0.0;          // max_ij |Im R_ij|
  double normalized_abs = 0.0;  // by 1/q + 1/(N eta)
  double normalized_im = 0.0;   // by 1/(N eta)
  double mean_offdiag_im = 0.0;
  double mean_diag_im = 0.0;
  double eta = 0.0;
};

/// Entry bounds over the edge window (dense path).
EntryLawStats entry_law_residual(const SpectralResolvent& r, double edge, double q, double delta,
                                 std::size_t points = 17);

/// max_ij N |eta Im R_ij(lambda_1 + i eta) - v_i v_j| with eta = N^{-2/3 - delta}.
double eigvec_link_residual(const SpectralResolvent& r, double delta);

struct DetectionReport {
  bool holds = true;
  std::vector<std::size_t> failing;  // indices j without a witness i
  std::uint32_t witness = 0;         // argmax_i Im R_ii
  double min_margin = 0.0;           // min_j 2N eta^{-1} Im R_ii / (max(eta, |lambda_j - E|))^{-2}
};

/// For every j, scans all i for (max(eta, |lambda_j - E|))^{-2} <= 2 N eta^{-1} Im R_ii(E + i eta).
DetectionReport detect_top_from_resolvent(const SpectralResolvent& r, double energy, double eta);

struct DriftWindow {
  std::vector<double> energies;
  double eta = 0.0;
};

/// The edge window around `edge` at scale delta.
DriftWindow drift_window(double edge, std::size_t n, double delta, std::size_t points = 17);

/// sup over the window and all (i, j) of N eta |Im R^[k]_ij - Im R_ij|.
double resolvent_drift(const SpectralResolvent& r, const SpectralResolvent& rk, const DriftWindow& window);

struct Lambda1Drift {
  double drift = 0.0;
  double normalized = 0.0;  // drift * N^{2/3 + delta}
};

Lambda1Drift lambda1_drift(double lambda1, double lambda1_k, std::size_t n, double delta);

/// CSV rows "kappa,eta,residual,bound" after "# " header lines.
void write_law_csv(std::ostream& os, std::span<const LawResidual> rows, const std::vector<std::string>& header = {});

}  // namespace rmt
