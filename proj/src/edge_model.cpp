#include "rmt/edge_model.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace rmt {

namespace {

double quartic_of(const EdgeModel& model) { return model.quartic.value_or(0.0); }

void require_upper(cplx z, const char* who) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument(std::string(who) + ": need Im z > 0");
}

cplx herglotz_checked(cplx m, const char* who) {
  if (!(m.imag() > 0.0)) throw BranchError(std::string(who) + ": lost the Herglotz branch");
  return m;
}

/// Newton polish of P(z, .) from y; returns false if it stalls.
bool newton_root(cplx z, double s2, double c, cplx& y) {
  for (int it = 0; it < 40; ++it) {
    const cplx y2 = y * y;
    const cplx p = 1.0 + z * y + s2 * y2 + c * y2 * y2;
    const cplx dp = z + 2.0 * s2 * y + 4.0 * c * y2 * y;
    if (std::abs(dp) < 1e-300) return false;
    // Near the double root at the edge rounding limits the step, so also
    // accept a residual at the level of the terms' rounding error.
    const double scale = 1.0 + std::abs(z * y) + s2 * std::norm(y) + std::abs(c) * std::norm(y2);
    if (std::abs(p) <= 8.0 * std::numeric_limits<double>::epsilon() * scale) return true;
    const cplx step = p / dp;
    y -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(y))) return true;
  }
  return false;
}

/// Continuation down the vertical line Re z = E from far above the spectrum.
cplx continue_quartic(cplx z, double s2, double c) {
  const double energy = z.real();
  const double target = z.imag();
  double eta = std::max({1e3, 100.0 * std::abs(energy), 10.0 * target});
  cplx y = -1.0 / cplx(energy, eta);
  if (!newton_root(cplx(energy, eta), s2, c, y) || !(y.imag() > 0.0)) {
    throw BranchError("m_star: could not seed the branch at large Im z");
  }
  double ratio = 0.7;
  while (eta > target) {
    const double next = std::max(target, eta * ratio);
    cplx trial = y;
    if (newton_root(cplx(energy, next), s2, c, trial) && trial.imag() > 0.0 &&
        std::abs(trial - y) <= 0.5 * (std::abs(y) + 1e-3)) {
      y = trial;
      eta = next;
      ratio = std::min(0.7, std::sqrt(ratio));
    } else {
      ratio = std::sqrt(ratio);
      if (ratio > 1.0 - 1e-9) throw BranchError("m_star: branch tracking failed near E = " + std::to_string(energy));
    }
  }
  return y;
}

}  // namespace

void EdgeModel::validate() const {
  if (!(1.0 + chi > 0.0)) throw std::invalid_argument("edge model needs 1 + chi > 0");
  const double c = quartic_of(*this);
  const double s2 = 1.0 + chi;
  if (s2 * s2 + 12.0 * c < 0.0) throw std::invalid_argument("edge model: quartic coefficient too negative");
}

cplx m_sc(cplx z) {
  require_upper(z, "m_sc");
  const cplx r = std::sqrt(z - 2.0) * std::sqrt(z + 2.0);
  // Roots (-z +- r)/2 multiply to 1; take the small one via the large one.
  const cplx big = std::abs(-z + r) > std::abs(-z - r) ? (-z + r) / 2.0 : (-z - r) / 2.0;
  return herglotz_checked(1.0 / big, "m_sc");
}

cplx m_star(cplx z, const EdgeModel& model) {
  require_upper(z, "m_star");
  const double s2 = 1.0 + model.chi;
  if (!(s2 > 0.0)) throw std::invalid_argument("m_star: need 1 + chi > 0");
  const double c = quartic_of(model);
  if (c == 0.0) {
    const double s = std::sqrt(s2);
    return herglotz_checked(m_sc(z / s) / s, "m_star");
  }
  return herglotz_checked(continue_quartic(z, s2, c), "m_star");
}

double edge_location(const EdgeModel& model) {
  model.validate();
  const double s2 = 1.0 + model.chi;
  const double c = quartic_of(model);
  // Double root: P = dP/dy = 0 gives 3c y^4 + s2 y^2 - 1 = 0 with y < 0.
  const double y2 = 2.0 / (s2 + std::sqrt(s2 * s2 + 12.0 * c));
  const double y = std::sqrt(y2);
  return 2.0 * s2 * y + 4.0 * c * y * y2;
}

double density(const EdgeModel& model, double energy) {
  const double near = m_star(cplx(energy, kDensityEta), model).imag();
  const double far = m_star(cplx(energy, 2.0 * kDensityEta), model).imag();
  return std::max(0.0, 2.0 * near - far) / std::numbers::pi;
}

EdgeMass::EdgeMass(const EdgeModel& model, std::size_t panels) : model_(model), edge_(edge_location(model)) {
  if (panels < 2) throw std::invalid_argument("EdgeMass needs at least two panels");
  theta_.resize(panels + 1);
  for (std::size_t p = 0; p <= panels; ++p) {
    theta_[p] = std::numbers::pi * static_cast<double>(p) / static_cast<double>(panels);
  }
  cumulative_.assign(panels + 1, 0.0);
  for (std::size_t p = 0; p < panels; ++p) {
    cumulative_[p + 1] = cumulative_[p] + arc_mass(node(p + 1), node(p));
  }
}

double EdgeMass::node(std::size_t p) const {
  if (p == 0) return edge_;
  if (p + 1 == theta_.size()) return -edge_;
  return edge_ * std::cos(theta_[p]);
}

// rho([a, b]) = Im of the integral of m over the upper half circle from a to b, over pi.
double EdgeMass::arc_mass(double a, double b) const {
  if (b <= a) return 0.0;
  const double center = 0.5 * (a + b);
  const double radius = 0.5 * (b - a);
  auto f = [&](double phi) {
    const cplx w = std::polar(1.0, phi);
    const cplx z(center + radius * w.real(), std::max(radius * w.imag(), 1e-300));
    return (m_star(z, model_) * cplx(0.0, radius) * w).imag();
  };
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, std::numbers::pi, 15, 1e-12, &error);
  if (!(error <= 1e-11)) {
    throw QuadratureError("edge mass quadrature did not converge (error " + std::to_string(error) + ")");
  }
  return -value / std::numbers::pi;
}

double EdgeMass::above(double x) const {
  if (x >= edge_) return 0.0;
  if (x <= -edge_) return total();
  const double theta = std::acos(x / edge_);
  const auto it = std::upper_bound(theta_.begin(), theta_.end(), theta);
  const auto p = std::min(static_cast<std::size_t>(std::distance(theta_.begin(), it)) - 1, theta_.size() - 2);
  return cumulative_[p] + arc_mass(x, node(p));
}

double EdgeMass::quantile(double mass) const {
  if (mass <= 0.0) return edge_;
  if (mass >= total()) return -edge_;
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), mass);
  const auto p = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
  const double hi = node(p);
  const double lo = node(p + 1);
  const double f_hi = cumulative_[p] - mass;
  const double f_lo = cumulative_[p + 1] - mass;
  if (f_hi == 0.0) return hi;
  auto residual = [&](double x) { return cumulative_[p] + arc_mass(x, hi) - mass; };
  std::uintmax_t iterations = 200;
  const auto bracket = boost::math::tools::toms748_solve(residual, lo, hi, f_lo, f_hi,
                                                         boost::math::tools::eps_tolerance<double>(50), iterations);
  if (iterations >= 200) throw QuadratureError("quantile inversion did not converge");
  return 0.5 * (bracket.first + bracket.second);
}

QuantileTable quantiles(const EdgeModel& model, std::size_t n) {
  if (n < 2) throw std::invalid_argument("quantiles: need n >= 2");
  const EdgeMass mass(model);
  QuantileTable table;
  table.edge = mass.edge();
  table.total_mass = mass.total();
  table.gammas.resize(n);
  table.gammas[0] = mass.edge();
  const double nn = static_cast<double>(n);
  for (std::size_t i = 1; i < n; ++i) table.gammas[i] = mass.quantile(static_cast<double>(i) / nn);
  return table;
}

RigidityReport rigidity_report(const EigenPairs& eigs, const QuantileTable& table, double q) {
  if (!(q > 0.0)) throw std::invalid_argument("rigidity_report: need q > 0");
  const double nn = static_cast<double>(table.gammas.size());
  RigidityReport out;
  out.scale = std::pow(nn, -1.0 / 3.0) / (q * q * q) + std::pow(nn, -2.0 / 3.0);
  for (std::size_t c = 0; c < eigs.values.size(); ++c) {
    const std::size_t i = eigs.first_index + c;
    if (i >= table.gammas.size()) throw std::out_of_range("rigidity_report: eigenvalue index beyond the table");
    const double r = std::abs(eigs.values[c] - table.gammas[i]);
    out.residuals.push_back(r);
    out.normalized.push_back(r / out.scale);
  }
  return out;
}

void write_quantiles_csv(std::ostream& os, const QuantileTable& table, const std::vector<std::string>& header) {
  for (const std::string& line : header) os << "# " << line << '\n';
  os << "index,gamma\n";
  for (std::size_t i = 0; i < table.gammas.size(); ++i) os << (i + 1) << ',' << format_double(table.gammas[i]) << '\n';
}

}  // namespace rmt
