#include "rmt/ensemble.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rmt {

namespace {

/// Walks the upper triangle (strict when `strict`) in row-major order and
/// visits every position independently with probability p, using geometric
/// skips so the cost is proportional to the number of hits.
template <typename Visit>
void bernoulli_walk(std::size_t n, bool strict, double p, Stream& rng, Visit&& visit) {
  if (p <= 0.0 || n == 0) return;
  const std::uint64_t total = strict ? pair_count(n) - n : pair_count(n);
  const double log_miss = p >= 1.0 ? 0.0 : std::log1p(-p);
  auto row_len = [&](std::uint64_t row) { return n - row - (strict ? 1 : 0); };
  std::uint64_t pos = 0;
  std::uint64_t row = 0;
  std::uint64_t row_start = 0;
  bool first = true;
  while (true) {
    std::uint64_t step = first ? 0 : 1;
    first = false;
    if (p < 1.0) {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      const double g = std::floor(std::log(u) / log_miss);
      if (g >= static_cast<double>(total)) return;
      step += static_cast<std::uint64_t>(g);
    }
    pos += step;
    if (pos >= total) return;
    while (pos >= row_start + row_len(row)) {
      row_start += row_len(row);
      ++row;
    }
    const std::uint64_t col = row + (strict ? 1 : 0) + (pos - row_start);
    visit(static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col));
  }
}

}  // namespace

double EntryLaw::sample(Stream& rng) const noexcept {
  switch (kind) {
    case EntryKind::rademacher:
      return (rng() >> 63) != 0 ? 1.0 : -1.0;
    case EntryKind::gaussian:
      return rng.normal();
    case EntryKind::uniform_symmetric:
      return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
  }
  return 0.0;
}

double EntryLaw::fourth_moment() const noexcept {
  switch (kind) {
    case EntryKind::rademacher:
      return 1.0;
    case EntryKind::gaussian:
      return 3.0;
    case EntryKind::uniform_symmetric:
      return 9.0 / 5.0;
  }
  return 0.0;
}

void EnsembleSpec::validate() const {
  if (n < 2) throw std::invalid_argument("ensemble size n must be at least 2");
  if (!(q > 0.0)) throw std::invalid_argument("sparsity q must be positive");
  const double nn = static_cast<double>(n);
  if (model == Model::centered_sparse) {
    if (q * q > nn * (1.0 + 1e-12)) throw std::invalid_argument("sparsity q must satisfy q <= sqrt(N)");
  } else if (q * q >= nn) {
    throw std::invalid_argument("Erdos-Renyi model requires q^2 < N");
  }
  if (!(law.subgaussian_param > 0.0)) throw std::invalid_argument("subgaussian parameter must be positive");
}

std::string_view to_string(EntryKind kind) noexcept {
  switch (kind) {
    case EntryKind::rademacher:
      return "rademacher";
    case EntryKind::gaussian:
      return "gaussian";
    case EntryKind::uniform_symmetric:
      return "uniform-symmetric";
  }
  return "?";
}

std::string_view to_string(Model model) noexcept {
  switch (model) {
    case Model::centered_sparse:
      return "centered-sparse";
    case Model::er_adjacency:
      return "er-adjacency";
    case Model::er_centered:
      return "er-centered";
  }
  return "?";
}

EntryKind parse_entry_kind(std::string_view name) {
  if (name == "rademacher") return EntryKind::rademacher;
  if (name == "gaussian") return EntryKind::gaussian;
  if (name == "uniform-symmetric") return EntryKind::uniform_symmetric;
  throw std::invalid_argument("unknown entry law '" + std::string(name) + "'");
}

Model parse_model(std::string_view name) {
  if (name == "centered-sparse") return Model::centered_sparse;
  if (name == "er-adjacency") return Model::er_adjacency;
  if (name == "er-centered") return Model::er_centered;
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

double er_zeta(std::size_t n, double q) {
  const double rate = q * q / static_cast<double>(n);
  if (!(rate < 1.0)) throw std::invalid_argument("Erdos-Renyi model requires q^2 < N");
  return 1.0 / std::sqrt(1.0 - rate);
}

double draw_entry(const EnsembleSpec& spec, std::uint32_t i, std::uint32_t j, Stream& rng) {
  const double p = spec.rate();
  if (spec.model == Model::centered_sparse) {
    const bool on = p >= 1.0 || rng.bernoulli(p);
    const double x = spec.law.sample(rng);
    return on ? x / spec.q : 0.0;
  }
  if (i == j) return 0.0;
  return rng.bernoulli(p) ? er_zeta(spec.n, spec.q) / spec.q : 0.0;
}

SparseSymMatrix sample_sparse(const EnsembleSpec& spec, Stream& rng) {
  if (spec.model != Model::centered_sparse) throw std::invalid_argument("sample_sparse needs the centered-sparse model");
  spec.validate();
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(spec.rate() * static_cast<double>(pair_count(spec.n)) * 1.1) + 16);
  bernoulli_walk(spec.n, false, std::min(1.0, spec.rate()), rng, [&](std::uint32_t i, std::uint32_t j) {
    entries.push_back({i, j, spec.law.sample(rng) / spec.q});
  });
  return SparseSymMatrix::from_entries(spec.n, std::move(entries));
}

SparseSymMatrix sample_er(std::size_t n, double q, Stream& rng) {
  const EnsembleSpec spec{n, q, EntryLaw{}, Model::er_adjacency};
  spec.validate();
  const double value = er_zeta(n, q) / q;
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(spec.rate() * static_cast<double>(pair_count(n)) * 1.1) + 16);
  bernoulli_walk(n, true, spec.rate(), rng, [&](std::uint32_t i, std::uint32_t j) {
    entries.push_back({i, j, value});
  });
  return SparseSymMatrix::from_entries(n, std::move(entries));
}

SparseSymMatrix sample(const EnsembleSpec& spec, Stream& rng) {
  return spec.model == Model::centered_sparse ? sample_sparse(spec, rng) : sample_er(spec.n, spec.q, rng);
}

double CenteredEr::entry(std::uint32_t i, std::uint32_t j) const {
  const double nn = static_cast<double>(size());
  return adjacency.value(i, j) - f / nn + (i == j ? a : 0.0);
}

Eigen::MatrixXd CenteredEr::dense() const {
  const double nn = static_cast<double>(size());
  Eigen::MatrixXd d = adjacency.dense();
  d.array() -= f / nn;
  d.diagonal().array() += a;
  return d;
}

void CenteredEr::apply(const SymCsr& adjacency_csr, std::span<const double> x, std::span<double> y) const {
  const std::size_t n = size();
  if (adjacency_csr.n != n || x.size() != n || y.size() != n) throw std::invalid_argument("CenteredEr::apply: size mismatch");
  double sum = 0.0;
  for (double v : x) sum += v;
  const double shift = f * sum / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t p = adjacency_csr.row_ptr[i]; p < adjacency_csr.row_ptr[i + 1]; ++p) {
      s += adjacency_csr.val[p] * x[adjacency_csr.col[p]];
    }
    y[i] = s - shift + a * x[i];
  }
}

CenteredEr center_er(const SparseSymMatrix& adjacency, double q) {
  const std::size_t n = adjacency.size();
  for (const Entry& e : adjacency.entries()) {
    if (e.row == e.col) throw std::invalid_argument("center_er: adjacency has a nonzero diagonal entry");
  }
  const double f = er_zeta(n, q) * q;
  return CenteredEr{adjacency, f, f / static_cast<double>(n)};
}

double correction_term(const SparseSymMatrix& h) noexcept {
  return h.frobenius_sq() / static_cast<double>(h.size()) - 1.0;
}

double correction_term(const CenteredEr& centered) noexcept {
  // Off-diagonal entries are A_ij - f/N, diagonal entries vanish.
  const double nn = static_cast<double>(centered.size());
  const double c = centered.f / nn;
  double s1 = 0.0;
  for (const Entry& e : centered.adjacency.entries()) s1 += 2.0 * e.value;
  const double s2 = centered.adjacency.frobenius_sq();
  const double off = nn * (nn - 1.0);
  const double sum_sq = s2 - 2.0 * c * s1 + off * c * c;
  return sum_sq / nn - 1.0;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("cannot parse number '" + std::string(text) + "'");
  }
  return x;
}

void write_matrix(std::ostream& os, const MatrixHeader& header, const SparseSymMatrix& h) {
  if (header.n != h.size()) throw std::invalid_argument("write_matrix: header size does not match matrix");
  os << header.n << ' ' << format_double(header.q) << ' ' << to_string(header.model) << ' ' << header.seed << '\n';
  for (const Entry& e : h.entries()) os << e.row << ' ' << e.col << ' ' << format_double(e.value) << '\n';
}

MatrixFile read_matrix(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("matrix file: missing header");
  std::istringstream hs(line);
  std::string n_text, q_text, model_text, seed_text, extra;
  if (!(hs >> n_text >> q_text >> model_text >> seed_text) || (hs >> extra)) {
    throw std::runtime_error("matrix file: header must be 'N q model seed'");
  }
  MatrixFile out;
  out.header.n = std::stoull(n_text);
  out.header.q = parse_double(q_text);
  out.header.model = parse_model(model_text);
  out.header.seed = std::stoull(seed_text);
  std::vector<Entry> entries;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t i = 0, j = 0;
    std::string v;
    if (!(ls >> i >> j >> v) || (ls >> extra)) {
      throw std::runtime_error("matrix file: malformed entry on line " + std::to_string(line_no));
    }
    if (i > std::numeric_limits<std::uint32_t>::max() || j > std::numeric_limits<std::uint32_t>::max()) {
      throw std::runtime_error("matrix file: index overflow on line " + std::to_string(line_no));
    }
    entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), parse_double(v)});
  }
  out.matrix = SparseSymMatrix::from_entries(out.header.n, std::move(entries));
  return out;
}

}  // namespace rmt
