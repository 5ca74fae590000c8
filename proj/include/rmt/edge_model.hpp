#pragma once

#include "rmt/spectral.hpp"

#include <complex>
#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmt {

using cplx = std::complex<double>;

/// Deformed edge data. The self-consistent polynomial is
///   P(z, y) = 1 + z y + (1 + chi) y^2 + quartic * y^4.
struct EdgeModel {
  double l0 = 2.0;  // deterministic L
  double chi = 0.0;
  std::optional<double> quartic;
  std::size_t n = 0;
  double q = 0.0;

  void validate() const;
};

class BranchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Semicircle Stieltjes transform: root of 1 + z m + m^2 with Im m > 0.
cplx m_sc(cplx z);

/// Herglotz root of P(z, .), tracked down from large Im z where m ~ -1/z.
/// Without the quartic term this is m_sc(z / s) / s with s = sqrt(1 + chi).
cplx m_star(cplx z, const EdgeModel& model);

/// Right edge of the support of rho_star.
double edge_location(const EdgeModel& model);

/// Imaginary offset used to read the density off the real axis.
inline constexpr double kDensityEta = 1e-6;

/// rho_star(E) from Im m_star near the axis (linear extrapolation in eta).
double density(const EdgeModel& model, double energy);

struct QuantileTable {
  std::vector<double> gammas;  // gamma_1 >= ... >= gamma_N
  double edge = 0.0;
  double total_mass = 0.0;     // integral of rho over the support
};

/// Integrated density over [x, edge]. Masses come from contour integrals of
/// m_star over upper half circles (the exact eta -> 0+ limit) between cached
/// panel nodes x_p = edge * cos(theta_p).
class EdgeMass {
 public:
  explicit EdgeMass(const EdgeModel& model, std::size_t panels = 128);

  [[nodiscard]] double edge() const noexcept { return edge_; }
  [[nodiscard]] double total() const noexcept { return cumulative_.back(); }
  /// rho([x, edge]).
  [[nodiscard]] double above(double x) const;
  /// x with rho([x, edge]) = mass, for 0 <= mass <= total().
  [[nodiscard]] double quantile(double mass) const;

 private:
  [[nodiscard]] double node(std::size_t p) const;
  /// rho([a, b]) for a <= b.
  [[nodiscard]] double arc_mass(double a, double b) const;

  EdgeModel model_;
  double edge_ = 0.0;
  std::vector<double> theta_;       // panel boundaries in [0, pi]
  std::vector<double> cumulative_;  // rho([x_p, edge])
};

/// gamma_i solving rho([gamma_i, edge]) = (i - 1) / N; gamma_1 = edge.
QuantileTable quantiles(const EdgeModel& model, std::size_t n);

struct RigidityReport {
  std::vector<double> residuals;   // |lambda_i - gamma_i|
  std::vector<double> normalized;  // residual / (N^{-1/3} q^{-3} + N^{-2/3})
  double scale = 0.0;
};

/// Compares every computed eigenvalue with its typical location.
RigidityReport rigidity_report(const EigenPairs& eigs, const QuantileTable& table, double q);

/// CSV "index,gamma" rows after the given header comment lines.
void write_quantiles_csv(std::ostream& os, const QuantileTable& table, const std::vector<std::string>& header = {});

}  // namespace rmt
