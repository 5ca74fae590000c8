#pragma once

#include "rmt/rng.hpp"
#include "rmt/sparse_matrix.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace rmt {

enum class EntryKind { rademacher, gaussian, uniform_symmetric };
enum class Model { centered_sparse, er_adjacency, er_centered };

/// Law of the unit-variance factor x_ij. `subgaussian_param` is metadata only.
struct EntryLaw {
  EntryKind kind = EntryKind::rademacher;
  double subgaussian_param = 0.25;

  [[nodiscard]] double sample(Stream& rng) const noexcept;
  /// E x^4 of the law (1, 3, 9/5).
  [[nodiscard]] double fourth_moment() const noexcept;
};

struct EnsembleSpec {
  std::size_t n = 0;
  double q = 1.0;
  EntryLaw law{};
  Model model = Model::centered_sparse;

  /// Bernoulli rate q^2 / N.
  [[nodiscard]] double rate() const noexcept { return q * q / static_cast<double>(n); }
  /// Throws std::invalid_argument when n < 2 or q is outside the model's range.
  void validate() const;
};

std::string_view to_string(EntryKind kind) noexcept;
std::string_view to_string(Model model) noexcept;
EntryKind parse_entry_kind(std::string_view name);
Model parse_model(std::string_view name);

/// zeta = (1 - q^2/N)^{-1/2}.
double er_zeta(std::size_t n, double q);

/// One draw of the (i, j) entry of the given ensemble.
double draw_entry(const EnsembleSpec& spec, std::uint32_t i, std::uint32_t j, Stream& rng);

/// Centered sparse ensemble: h_ij = x_ij y_ij / q, P(y = 1) = q^2/N, diagonal included.
SparseSymMatrix sample_sparse(const EnsembleSpec& spec, Stream& rng);
/// Erdos-Renyi adjacency scaled so off-diagonal entries are zeta/q w.p. q^2/N.
SparseSymMatrix sample_er(std::size_t n, double q, Stream& rng);
/// Dispatches on spec.model (er-centered samples the adjacency; center it with center_er).
SparseSymMatrix sample(const EnsembleSpec& spec, Stream& rng);

/// A - E A kept as sparse A plus scalars: centered = A - f e e^T + a I,
/// with e = N^{-1/2}(1, ..., 1), f = zeta q, a = f / N.
struct CenteredEr {
  SparseSymMatrix adjacency;
  double f = 0.0;
  double a = 0.0;

  [[nodiscard]] std::size_t size() const noexcept { return adjacency.size(); }
  [[nodiscard]] double entry(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] Eigen::MatrixXd dense() const;
  /// y = (A - f e e^T + a I) x.
  void apply(const SymCsr& adjacency_csr, std::span<const double> x, std::span<double> y) const;
};

CenteredEr center_er(const SparseSymMatrix& adjacency, double q);

/// Tr(H^2)/N - 1.
double correction_term(const SparseSymMatrix& h) noexcept;
double correction_term(const CenteredEr& centered) noexcept;

/// First line of the text matrix format: "N q model seed".
struct MatrixHeader {
  std::size_t n = 0;
  double q = 0.0;
  Model model = Model::centered_sparse;
  std::uint64_t seed = 0;
  friend bool operator==(const MatrixHeader&, const MatrixHeader&) = default;
};

/// Writes the header then one "i j value" line per stored entry; values use
/// the shortest round-trip decimal form so reading back is bit exact.
void write_matrix(std::ostream& os, const MatrixHeader& header, const SparseSymMatrix& h);

struct MatrixFile {
  MatrixHeader header;
  SparseSymMatrix matrix;
};
MatrixFile read_matrix(std::istream& is);

/// Shortest decimal text that parses back to exactly `x`.
std::string format_double(double x);
double parse_double(std::string_view text);

}  // namespace rmt
