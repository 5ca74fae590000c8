#pragma once

#include "rmt/ensemble.hpp"
#include "rmt/records.hpp"
#include "rmt/resample.hpp"
#include "rmt/spectral.hpp"
#include "rmt/stats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

namespace rmt {

/// q as a function of N: N^value (power) or value (constant).
struct QRule {
  enum class Kind { power, constant };
  Kind kind = Kind::power;
  double value = 1.0 / 3.0;

  [[nodiscard]] double operator()(std::size_t n) const;
  [[nodiscard]] json to_json() const;
};

/// How eigenpairs are computed inside experiments.
struct SolverPolicy {
  /// Dense LAPACK below this size, Lanczos above.
  std::size_t small_dense = 160;
  std::size_t dense_cap = kDefaultDenseCap;
  LanczosOptions lanczos{};
};

/// One eigenpair of interest, with its spectral neighbourhood.
struct TrackedEigen {
  double value = 0.0;
  Eigen::VectorXd vector;
  double gap = 0.0;     // distance to the nearest computed neighbour
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Eigen::MatrixXd block;  // every computed vector, reused as a warm start
  int matvecs = 0;
  bool dense_fallback = false;
};

/// Operator for the model: H itself, the adjacency A, or the centered A.
/// `index` is 1-based in descending order (index == n is the smallest).
TrackedEigen track_eigen(const SparseSymMatrix& h, const EnsembleSpec& spec, std::size_t index,
                         const Eigen::MatrixXd* warm_start, const SolverPolicy& policy);

/// 𝓧 of the matrix the eigenvalues refer to (centered A for ER models).
double model_correction(const SparseSymMatrix& h, const EnsembleSpec& spec);

inline constexpr double kDegenerateGap = 1e-9;

/// Worker count for trial-level parallelism; BLAS stays single threaded so
/// results never depend on the thread count.
void configure_threads(int workers);
int worker_count();

/// Error listing every problem found in a configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// ---------------------------------------------------------------------------
// Sensitivity sweeps

struct KColumn {
  std::string label;
  std::optional<double> alpha;
  std::uint64_t k = 0;
};

struct SweepConfig {
  std::vector<std::size_t> ns;
  QRule q_rule{};
  std::vector<double> alphas{1.2, 1.4, 1.5, 1.6, 1.667, 1.75, 1.85, 1.95};
  std::vector<std::uint64_t> ks;  // explicit k values
  bool include_zero = true;
  std::size_t trials = 1;
  std::uint64_t master_seed = 0;
  Model model = Model::centered_sparse;
  EntryLaw law{};
  std::size_t eigen_index = 1;  // 1-based; 0 stands for N
  SolverPolicy policy{};

  [[nodiscard]] std::vector<std::string> problems() const;
  void validate() const;
  [[nodiscard]] EnsembleSpec spec(std::size_t n) const;
  [[nodiscard]] std::size_t index_for(std::size_t n) const;
  /// Columns ordered by k: k = 0, then min(round(N^alpha), M) per alpha, then explicit ks.
  [[nodiscard]] std::vector<KColumn> columns(std::size_t n) const;
  [[nodiscard]] json to_json() const;
};

struct TrialRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::size_t n = 0;
  double q = 0.0;
  std::string column;
  std::optional<double> alpha;
  std::uint64_t k = 0;
  std::size_t eigen_index = 1;
  std::uint64_t changed = 0;  // entries that differ between H and H^[k]
  double overlap = 0.0;
  double aligned_inf_dist = 0.0;
  double lambda1 = 0.0;    // tracked eigenvalue of H
  double lambda1_k = 0.0;  // tracked eigenvalue of H^[k]
  double chi = 0.0;
  double chi_k = 0.0;
  double gap12 = 0.0;      // gap of the tracked eigenvalue of H
  double gap12_k = 0.0;
  int matvecs = 0;
  std::vector<std::string> flags;

  [[nodiscard]] bool usable() const;
  [[nodiscard]] json to_json() const;
  static TrialRecord from_json(const json& j);
};

/// All columns of one trial at size n, sharing one coupled (H, H', order).
std::vector<TrialRecord> run_sweep_trial(const SweepConfig& cfg, std::size_t n, std::uint64_t trial,
                                         const std::string& experiment = "sweep");
/// Trials [lo, hi) at size n, in trial order; trials run in parallel.
std::vector<TrialRecord> run_sweep_batch(const SweepConfig& cfg, std::size_t n, std::uint64_t lo, std::uint64_t hi,
                                         const std::string& experiment = "sweep");

struct SummaryRow {
  std::size_t n = 0;
  std::size_t eigen_index = 1;
  double q = 0.0;
  std::string column;
  std::optional<double> alpha;
  std::uint64_t k = 0;
  std::size_t trials = 0;
  std::size_t used = 0;
  std::size_t flagged = 0;
  stats::MeanSe overlap;
  stats::MeanSe overlap_sq;
  stats::MeanSe aligned;
};

/// Mean +- SE per (N, column), flagged records excluded but counted.
std::vector<SummaryRow> summarize_sweep(std::span<const TrialRecord> records);
std::string summary_csv(std::span<const SummaryRow> rows, const std::vector<std::string>& header);

struct SweepResult {
  std::vector<TrialRecord> records;
  std::vector<SummaryRow> summary;
};

SweepResult sensitivity_sweep(const SweepConfig& cfg, const std::string& experiment = "sweep");

/// Spearman correlation of mean overlap against k over one N's columns.
double overlap_trend(std::span<const SummaryRow> rows, std::size_t n);

// ---------------------------------------------------------------------------
// Scaling collapse

struct Curve {
  std::size_t n = 0;
  std::vector<double> k;
  std::vector<double> y;
  double k_scale = 1.0;  // abscissa uses k * k_scale
};

struct CollapseReport {
  double exponent = 0.0;
  double error = 0.0;  // max over the grid of (max - min) across curves
  double lo = 0.0;     // common range of log(k k_scale / N^exponent)
  double hi = 0.0;
  std::vector<double> grid;
  std::vector<std::vector<double>> values;  // per curve, on the grid
};

class CollapseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<CollapseReport> scaling_collapse(std::span<const Curve> curves, std::span<const double> exponents,
                                             std::size_t grid_points = 101);
std::size_t best_exponent(std::span<const CollapseReport> reports);
/// Mean-overlap curves (k > 0 columns) per N from a summary. With
/// `index_scaled`, k is multiplied by min(j, N - j)^{2/3} for eigen index j.
std::vector<Curve> curves_from_summary(std::span<const SummaryRow> rows, bool index_scaled = false);
std::string collapse_csv(std::span<const CollapseReport> reports, const std::vector<std::string>& header);

/// k where the curve first drops through `level` (log-linear interpolation), NaN if never.
double threshold_crossing(const Curve& curve, double level = 0.5);

// ---------------------------------------------------------------------------
// Edge samples: variance scan and gap statistics

struct EdgeConfig {
  std::vector<std::size_t> ns;
  QRule q_rule{};
  std::size_t trials = 1;
  std::uint64_t master_seed = 0;
  Model model = Model::centered_sparse;
  EntryLaw law{};
  std::vector<double> deltas{0.1, 0.3, 1.0};
  SolverPolicy policy{};

  /// `min_sizes` distinct sizes are required (4 for variance scans, 2 for gaps).
  [[nodiscard]] std::vector<std::string> problems(std::size_t min_sizes = 1) const;
  void validate(std::size_t min_sizes = 1) const;
  [[nodiscard]] EnsembleSpec spec(std::size_t n) const;
  [[nodiscard]] json to_json() const;
};

struct EdgeRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::size_t n = 0;
  double q = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double chi = 0.0;
  int matvecs = 0;
  std::vector<std::string> flags;

  [[nodiscard]] bool usable() const;
  [[nodiscard]] json to_json() const;
  static EdgeRecord from_json(const json& j);
};

EdgeRecord run_edge_trial(const EdgeConfig& cfg, std::size_t n, std::uint64_t trial, const std::string& experiment);
std::vector<EdgeRecord> run_edge_batch(const EdgeConfig& cfg, std::size_t n, std::uint64_t lo, std::uint64_t hi,
                                       const std::string& experiment);

struct VarianceRow {
  std::size_t n = 0;
  double q = 0.0;
  std::size_t used = 0;
  double l_hat = 0.0;     // grand mean of lambda1 - chi
  double variance = 0.0;  // Var(lambda1 - L - chi)
  double variance_se = 0.0;
  stats::Interval ci;
  double raw_variance = 0.0;  // Var(lambda1)
};

struct VarianceReport {
  std::vector<VarianceRow> rows;
  stats::LineFit fit;      // log Var(lambda1 - L - chi) against log N
  stats::LineFit raw_fit;  // log Var(lambda1) against log N
};

VarianceReport variance_scan(std::span<const EdgeRecord> records, std::uint64_t bootstrap_seed);
std::string variance_csv(const VarianceReport& report, const std::vector<std::string>& header);

struct GapRow {
  std::size_t n = 0;
  double q = 0.0;
  std::size_t used = 0;
  double median_gap = 0.0;
  stats::Interval median_ci;
  std::vector<double> tail;     // P(gap <= delta / N) per delta
  std::vector<double> tail_se;
};

struct GapReport {
  std::vector<double> deltas;
  std::vector<GapRow> rows;
  stats::LineFit median_fit;  // log median gap against log N
  double fitted_c = 0.0;      // max over (N, delta) of P / (delta log N)
  bool tail_monotone = true;  // P non-decreasing in delta at every N
};

GapReport gap_report(std::span<const EdgeRecord> records, std::span<const double> deltas,
                     std::uint64_t bootstrap_seed);
std::string gap_csv(const GapReport& report, const std::vector<std::string>& header);

// ---------------------------------------------------------------------------
// Inequality between overlap and variance

struct HmainRow {
  std::size_t n = 0;
  std::uint64_t k = 0;
  std::optional<double> alpha;
  double mean_overlap_sq = 0.0;
  double mean_overlap_sq_se = 0.0;
  double variance = 0.0;  // Var(lambda1 - chi) over the k = 0 records
  double rhs = 0.0;       // N^3 Var / k
  double ratio = 0.0;
  double ratio_se = 0.0;
};

struct HmainReport {
  std::vector<HmainRow> rows;
  double max_ratio = 0.0;
  bool decreasing = true;  // ratio non-increasing in k at every N
};

/// Needs the k = 0 column (for the variance) and k > 0 columns.
HmainReport hmain1_check(std::span<const TrialRecord> records);
std::string hmain_csv(const HmainReport& report, const std::vector<std::string>& header);

// ---------------------------------------------------------------------------
// Eigenvalue sticking for ER graphs

struct StickingRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::size_t n = 0;
  double q = 0.0;
  double nu2 = 0.0;           // second eigenvalue of A
  double nu_centered1 = 0.0;  // top eigenvalue of the centered matrix
  double a = 0.0;
  double residual = 0.0;      // N |nu2 - (nu_centered1 - a)|
  std::vector<std::string> flags;

  [[nodiscard]] json to_json() const;
  static StickingRecord from_json(const json& j);
};

StickingRecord run_sticking_trial(const EdgeConfig& cfg, std::size_t n, std::uint64_t trial);
std::vector<StickingRecord> run_sticking_batch(const EdgeConfig& cfg, std::size_t n, std::uint64_t lo,
                                               std::uint64_t hi);

struct StickingRow {
  std::size_t n = 0;
  double q = 0.0;
  std::size_t used = 0;
  double median = 0.0;
  stats::Interval ci;
};

struct StickingReport {
  std::vector<StickingRow> rows;
  double spread = 0.0;  // max median / min median
};

StickingReport sticking_report(std::span<const StickingRecord> records, std::uint64_t bootstrap_seed);
std::string sticking_csv(const StickingReport& report, const std::vector<std::string>& header);

// ---------------------------------------------------------------------------
// Resolvent drift under resampling

struct DriftConfig {
  std::size_t n = 1024;
  QRule q_rule{QRule::Kind::constant, 8.0};
  double alpha = 4.0 / 3.0;  // k = round(N^alpha)
  std::size_t trials = 1;
  std::uint64_t master_seed = 0;
  EntryLaw law{};
  double delta = 0.05;
  std::size_t points = 17;
  std::size_t dense_cap = kDefaultDenseCap;

  [[nodiscard]] std::vector<std::string> problems() const;
  void validate() const;
  [[nodiscard]] std::uint64_t k() const;
  [[nodiscard]] json to_json() const;
};

struct DriftRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::size_t n = 0;
  double q = 0.0;
  std::uint64_t k = 0;
  double chi = 0.0;
  double edge = 0.0;
  double eta = 0.0;
  double drift = 0.0;           // resampled at k
  double drift_contrast = 0.0;  // k = M (independent copy)
  double lambda1 = 0.0;
  double lambda1_k = 0.0;
  double lambda1_contrast = 0.0;
  double lambda1_drift_norm = 0.0;           // |lambda1 - lambda1_k| N^{2/3 + delta}
  double lambda1_contrast_drift_norm = 0.0;
  double eigvec_link = 0.0;
  std::vector<std::string> flags;

  [[nodiscard]] json to_json() const;
  static DriftRecord from_json(const json& j);
};

DriftRecord run_drift_trial(const DriftConfig& cfg, std::uint64_t trial);
std::vector<DriftRecord> run_drift_batch(const DriftConfig& cfg, std::uint64_t lo, std::uint64_t hi);

struct DriftReport {
  std::size_t trials = 0;
  double threshold = 0.0;         // N^{-0.02}
  double frac_small = 0.0;        // drift <= threshold
  double frac_contrast_large = 0.0;  // contrast drift > 0.5
  double median_drift = 0.0;
  double median_contrast = 0.0;
  double median_lambda1_norm = 0.0;
  bool contrast_exceeds_zero = true;  // drift(k = M) > drift(k = 0) = 0 in every trial
};

DriftReport drift_report(std::span<const DriftRecord> records);
std::string drift_csv(std::span<const DriftRecord> records, const std::vector<std::string>& header);

}  // namespace rmt
