#pragma once

#include "rmt/ensemble.hpp"
#include "rmt/sparse_matrix.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace rmt {

enum class EigenMethod { dense_full, dense_range, iterative_topm };
enum class Which { largest, smallest };

/// Eigenvalues in descending order (all of them, or an extreme block) plus
/// unit eigenvectors for `vector_indices` (0-based positions in the full
/// descending order). Vectors carry the canonical sign.
struct EigenPairs {
  std::vector<double> values;
  std::size_t first_index = 0;  // global position of values[0]
  Eigen::MatrixXd vectors;      // one column per entry of vector_indices
  std::vector<std::size_t> vector_indices;
  EigenMethod method = EigenMethod::dense_full;
  int matvecs = 0;

  /// Eigenvalue at global descending position `index`.
  [[nodiscard]] double value(std::size_t index) const;
  /// Eigenvector at global descending position `index`.
  [[nodiscard]] Eigen::VectorXd vector(std::size_t index) const;
};

struct GapStats {
  std::vector<double> gaps;
  std::size_t n = 0;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Symmetric linear operator given by its action.
struct SymOperator {
  std::size_t n = 0;
  std::function<void(std::span<const double>, std::span<double>)> apply;
};

/// Operator view of a CSR matrix; `csr` must outlive the operator.
SymOperator make_operator(const SymCsr& csr);
/// Operator view of the centered ER matrix; both arguments must outlive it.
SymOperator make_operator(const CenteredEr& centered, const SymCsr& adjacency_csr);

inline constexpr std::size_t kDefaultDenseCap = 4096;

/// Dense oracle: every eigenvalue, eigenvectors for `vector_indices`.
EigenPairs full_spectrum(const Eigen::MatrixXd& dense, std::span<const std::size_t> vector_indices = {},
                         std::size_t dense_cap = kDefaultDenseCap);
EigenPairs full_spectrum(const SparseSymMatrix& h, std::span<const std::size_t> vector_indices = {},
                         std::size_t dense_cap = kDefaultDenseCap);

/// Dense extreme block: the m largest (or smallest) eigenpairs only.
EigenPairs dense_extreme(const Eigen::MatrixXd& dense, std::size_t m, Which which = Which::largest);

struct LanczosOptions {
  std::size_t max_basis = 300;
  int max_restarts = 60;
  /// Ritz residual target relative to max(1, |theta|).
  double tol = 1e-11;
  std::uint64_t seed = 0x5EEDULL;
};

/// Thick-restart Lanczos with full reorthogonalization. `warm_start` columns
/// (eigenvectors of a nearby matrix) seed the Krylov space when given.
/// Throws ConvergenceError when the budget is exhausted.
EigenPairs top_eigs(const SymOperator& op, std::size_t m, Which which = Which::largest,
                    const Eigen::MatrixXd* warm_start = nullptr, const LanczosOptions& options = {});

/// Flips v so its largest-magnitude coordinate is positive (lowest index wins ties).
void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v);

/// |<v, w>| clamped to [0, 1]; exactly 1 when w = +-v coordinatewise.
double overlap(std::span<const double> v, std::span<const double> w);
double overlap(const Eigen::VectorXd& v, const Eigen::VectorXd& w);

/// min over s in {+1, -1} of sqrt(N) * ||v - s w||_inf.
double aligned_inf_dist(std::span<const double> v, std::span<const double> w);
double aligned_inf_dist(const Eigen::VectorXd& v, const Eigen::VectorXd& w);

/// sqrt(N) * max over the columns of ||v||_inf.
double delocalization_stat(const Eigen::MatrixXd& vectors);

/// lambda_i - lambda_{i+1} for each requested 0-based global index i.
GapStats gap_stats(const EigenPairs& eigs, std::span<const std::size_t> indices);

/// Largest ||H v - lambda v||_2 / max(1, |lambda|) over the returned pairs.
double max_relative_residual(const SymOperator& op, const EigenPairs& eigs);

}  // namespace rmt
