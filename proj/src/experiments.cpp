#include "rmt/experiments.hpp"

#include "rmt/edge_model.hpp"
#include "rmt/resolvent.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

extern "C" void openblas_set_num_threads(int);

namespace rmt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int g_workers = 1;

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

json flags_json(const std::vector<std::string>& flags) { return json(flags); }

std::vector<std::string> flags_from(const json& j) {
  std::vector<std::string> out;
  if (const auto it = j.find("flags"); it != j.end()) out = it->get<std::vector<std::string>>();
  return out;
}

bool has_flag(const std::vector<std::string>& flags, std::string_view f) {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

void add_flag(std::vector<std::string>& flags, const std::string& f) {
  if (!has_flag(flags, f)) flags.push_back(f);
}

json law_json(const EntryLaw& law) {
  return json{{"kind", std::string(to_string(law.kind))}, {"subgaussian_param", law.subgaussian_param}};
}

// Runs body(i) for i in [0, count) across workers, rethrowing the first
// failure after the loop.
template <class Body>
void parallel_trials(std::size_t count, Body body) {
  std::vector<std::exception_ptr> errors(count);
  const auto total = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(g_workers)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::string> size_problems(const std::vector<std::size_t>& ns, const QRule& rule, Model model,
                                       const char* key) {
  std::vector<std::string> out;
  if (ns.empty()) out.push_back(std::string(key) + ": at least one size is required");
  for (const std::size_t n : ns) {
    EnsembleSpec spec{n, rule(n), {}, model};
    try {
      spec.validate();
    } catch (const std::exception& e) {
      out.push_back(std::string(key) + ": N=" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::uint64_t alpha_k(std::size_t n, double alpha) {
  const double k = std::round(std::pow(static_cast<double>(n), alpha));
  const double m = static_cast<double>(pair_count(n));
  return static_cast<std::uint64_t>(std::min(k, m));
}

std::string alpha_label(double alpha) {
  std::ostringstream os;
  os << "alpha=" << format_double(alpha);
  return os.str();
}

}  // namespace

void configure_threads(int workers) {
  g_workers = std::max(1, workers);
  openblas_set_num_threads(1);
  omp_set_num_threads(g_workers);
}

int worker_count() { return g_workers; }

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument("invalid configuration: " + join(problems, "; ")), problems_(std::move(problems)) {}

double QRule::operator()(std::size_t n) const {
  return kind == Kind::power ? std::pow(static_cast<double>(n), value) : value;
}

json QRule::to_json() const {
  return json{{"kind", kind == Kind::power ? "power" : "constant"}, {"value", value}};
}

// ---------------------------------------------------------------------------
// Eigenpair tracking

double model_correction(const SparseSymMatrix& h, const EnsembleSpec& spec) {
  if (spec.model == Model::centered_sparse) return correction_term(h);
  return correction_term(center_er(h, spec.q));
}

TrackedEigen track_eigen(const SparseSymMatrix& h, const EnsembleSpec& spec, std::size_t index,
                         const Eigen::MatrixXd* warm_start, const SolverPolicy& policy) {
  const std::size_t n = h.size();
  if (index < 1 || index > n) throw std::invalid_argument("track_eigen: index out of range");
  const std::size_t pos = index - 1;

  std::optional<CenteredEr> centered;
  if (spec.model == Model::er_centered) centered = center_er(h, spec.q);

  auto from_pairs = [&](const EigenPairs& e, bool fallback) {
    TrackedEigen t;
    t.value = e.value(pos);
    t.vector = e.vector(pos);
    t.block = e.vectors;
    t.matvecs = e.matvecs;
    t.dense_fallback = fallback;
    const std::size_t first = e.first_index;
    const std::size_t last = first + e.values.size() - 1;
    t.gap = std::numeric_limits<double>::infinity();
    if (pos > first) t.gap = std::min(t.gap, e.value(pos - 1) - t.value);
    if (pos < last) t.gap = std::min(t.gap, t.value - e.value(pos + 1));
    t.lambda1 = first == 0 ? e.value(0) : kNaN;
    t.lambda2 = first == 0 && last >= 1 ? e.value(1) : kNaN;
    return t;
  };

  auto dense = [&](bool fallback) {
    if (n > policy.dense_cap) throw ConvergenceError("eigensolver failed above the dense cap");
    const Eigen::MatrixXd d = centered ? centered->dense() : h.dense();
    std::vector<std::size_t> want{pos};
    return from_pairs(full_spectrum(d, want, policy.dense_cap), fallback);
  };

  if (n <= policy.small_dense) return dense(false);

  const SymCsr csr = h.csr();
  const SymOperator op = centered ? make_operator(*centered, csr) : make_operator(csr);
  const bool top = pos < n / 2;
  const std::size_t from_end = top ? pos + 1 : n - pos;  // 1-based rank from the chosen end
  const std::size_t m = std::min(n, std::max<std::size_t>(2, from_end + 1));
  const Eigen::MatrixXd* warm = warm_start && warm_start->rows() == static_cast<Eigen::Index>(n) ? warm_start : nullptr;
  try {
    return from_pairs(top_eigs(op, m, top ? Which::largest : Which::smallest, warm, policy.lanczos), false);
  } catch (const ConvergenceError&) {
    return dense(true);
  }
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<std::string> SweepConfig::problems() const {
  std::vector<std::string> out = size_problems(ns, q_rule, model, "ns");
  if (trials < 1) out.push_back("trials: must be at least 1");
  if (alphas.empty() && ks.empty() && !include_zero) out.push_back("alphas/ks: no k columns requested");
  for (const double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) out.push_back("alphas: exponent " + format_double(a) + " must be positive");
  }
  for (const std::size_t n : ns) {
    for (const std::uint64_t k : ks) {
      if (k > pair_count(n)) {
        out.push_back("ks: k=" + std::to_string(k) + " exceeds M=" + std::to_string(pair_count(n)) +
                      " at N=" + std::to_string(n));
      }
    }
    if (eigen_index > n) {
      out.push_back("eigen_index: " + std::to_string(eigen_index) + " exceeds N=" + std::to_string(n));
    }
  }
  if ((model == Model::er_adjacency || model == Model::er_centered) && eigen_index != 0 && eigen_index != 1 &&
      eigen_index != 2) {
    bool is_last = !ns.empty();
    for (const std::size_t n : ns) is_last = is_last && eigen_index == n;
    if (!is_last) out.push_back("eigen_index: Erdos-Renyi sweeps track index 1, 2 or N (0)");
  }
  if (policy.dense_cap < 2) out.push_back("dense_cap: must be at least 2");
  return out;
}

void SweepConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

EnsembleSpec SweepConfig::spec(std::size_t n) const { return EnsembleSpec{n, q_rule(n), law, model}; }

std::size_t SweepConfig::index_for(std::size_t n) const { return eigen_index == 0 ? n : eigen_index; }

std::vector<KColumn> SweepConfig::columns(std::size_t n) const {
  std::vector<KColumn> cols;
  if (include_zero) cols.push_back({"k=0", std::nullopt, 0});
  for (const double a : alphas) cols.push_back({alpha_label(a), a, alpha_k(n, a)});
  for (const std::uint64_t k : ks) cols.push_back({"k=" + std::to_string(k), std::nullopt, k});
  std::stable_sort(cols.begin(), cols.end(), [](const KColumn& a, const KColumn& b) { return a.k < b.k; });
  return cols;
}

json SweepConfig::to_json() const {
  return json{{"ns", ns},
              {"q_rule", q_rule.to_json()},
              {"alphas", alphas},
              {"ks", ks},
              {"include_zero", include_zero},
              {"trials", trials},
              {"seed", master_seed},
              {"model", std::string(to_string(model))},
              {"law", law_json(law)},
              {"eigen_index", eigen_index},
              {"dense_cap", policy.dense_cap}};
}

bool TrialRecord::usable() const {
  return !has_flag(flags, "degenerate_gap") && !has_flag(flags, "solver_failure");
}

json TrialRecord::to_json() const {
  json j{{"experiment", experiment}, {"seed", seed},       {"trial", trial},     {"n", n},
         {"column", column},         {"k", k},             {"eigen_index", eigen_index},
         {"changed", changed},       {"matvecs", matvecs}, {"flags", flags_json(flags)}};
  put_number(j, "q", q);
  j["alpha"] = alpha ? json(*alpha) : json(nullptr);
  put_number(j, "overlap", overlap);
  put_number(j, "aligned_inf_dist", aligned_inf_dist);
  put_number(j, "lambda1", lambda1);
  put_number(j, "lambda1_k", lambda1_k);
  put_number(j, "chi", chi);
  put_number(j, "chi_k", chi_k);
  put_number(j, "gap12", gap12);
  put_number(j, "gap12_k", gap12_k);
  return j;
}

TrialRecord TrialRecord::from_json(const json& j) {
  TrialRecord r;
  r.experiment = j.at("experiment").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial = j.at("trial").get<std::uint64_t>();
  r.n = j.at("n").get<std::size_t>();
  r.q = get_number(j, "q");
  r.column = j.at("column").get<std::string>();
  r.alpha = get_optional(j, "alpha");
  r.k = j.at("k").get<std::uint64_t>();
  r.eigen_index = j.at("eigen_index").get<std::size_t>();
  r.changed = j.value("changed", std::uint64_t{0});
  r.overlap = get_number(j, "overlap");
  r.aligned_inf_dist = get_number(j, "aligned_inf_dist");
  r.lambda1 = get_number(j, "lambda1");
  r.lambda1_k = get_number(j, "lambda1_k");
  r.chi = get_number(j, "chi");
  r.chi_k = get_number(j, "chi_k");
  r.gap12 = get_number(j, "gap12");
  r.gap12_k = get_number(j, "gap12_k");
  r.matvecs = j.value("matvecs", 0);
  r.flags = flags_from(j);
  return r;
}

std::vector<TrialRecord> run_sweep_trial(const SweepConfig& cfg, std::size_t n, std::uint64_t trial,
                                         const std::string& experiment) {
  const EnsembleSpec spec = cfg.spec(n);
  const std::vector<KColumn> cols = cfg.columns(n);
  const std::size_t index = cfg.index_for(n);
  std::uint64_t k_max = 0;
  for (const KColumn& c : cols) k_max = std::max(k_max, c.k);

  std::vector<TrialRecord> out;
  out.reserve(cols.size());
  for (const KColumn& c : cols) {
    TrialRecord r;
    r.experiment = experiment;
    r.seed = cfg.master_seed;
    r.trial = trial;
    r.n = n;
    r.q = spec.q;
    r.column = c.label;
    r.alpha = c.alpha;
    r.k = c.k;
    r.eigen_index = index;
    r.overlap = r.aligned_inf_dist = r.lambda1 = r.lambda1_k = kNaN;
    r.chi = r.chi_k = r.gap12 = r.gap12_k = kNaN;
    out.push_back(std::move(r));
  }

  SolverPolicy policy = cfg.policy;
  policy.lanczos.seed = Stream::derive(cfg.master_seed, n, trial, Role::start).key();

  const ResamplePair pair =
      make_resample_pair(spec, Stream::derive(cfg.master_seed, n, trial, Role::base),
                         Stream::derive(cfg.master_seed, n, trial, Role::fresh),
                         Stream::derive(cfg.master_seed, n, trial, Role::order), k_max);

  TrackedEigen base;
  try {
    base = track_eigen(pair.base(), spec, index, nullptr, policy);
  } catch (const std::exception&) {
    for (TrialRecord& r : out) add_flag(r.flags, "solver_failure");
    return out;
  }
  const double chi = model_correction(pair.base(), spec);

  SparseSymMatrix current = pair.base();
  std::uint64_t k_prev = 0;
  std::uint64_t changed = 0;
  const Eigen::MatrixXd* warm = &base.block;
  TrackedEigen last;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    TrialRecord& r = out[c];
    r.lambda1 = base.value;
    r.chi = chi;
    r.gap12 = base.gap;
    if (base.dense_fallback) add_flag(r.flags, "dense_fallback");
    const std::uint64_t k = cols[c].k;
    if (k > k_prev) {
      const std::vector<EntryChange> diffs = pair.resample_diffs(k_prev, k);
      changed += diffs.size();
      current = apply_changes(current, diffs);
      k_prev = k;
    }
    r.changed = changed;
    if (changed == 0) {
      // H^[k] = H: reuse the base pair so the overlap is exactly 1.
      r.lambda1_k = base.value;
      r.chi_k = chi;
      r.gap12_k = base.gap;
      r.overlap = overlap(base.vector, base.vector);
      r.aligned_inf_dist = 0.0;
      r.matvecs = base.matvecs;
    } else {
      try {
        last = track_eigen(current, spec, index, warm, policy);
        warm = &last.block;
        r.lambda1_k = last.value;
        r.chi_k = model_correction(current, spec);
        r.gap12_k = last.gap;
        r.overlap = overlap(base.vector, last.vector);
        r.aligned_inf_dist = aligned_inf_dist(base.vector, last.vector);
        r.matvecs = last.matvecs;
        if (last.dense_fallback) add_flag(r.flags, "dense_fallback");
      } catch (const std::exception&) {
        add_flag(r.flags, "solver_failure");
        continue;
      }
    }
    if (r.gap12 < kDegenerateGap || r.gap12_k < kDegenerateGap) add_flag(r.flags, "degenerate_gap");
  }
  return out;
}

std::vector<TrialRecord> run_sweep_batch(const SweepConfig& cfg, std::size_t n, std::uint64_t lo, std::uint64_t hi,
                                         const std::string& experiment) {
  std::vector<std::vector<TrialRecord>> per(hi > lo ? hi - lo : 0);
  parallel_trials(per.size(), [&](std::size_t i) { per[i] = run_sweep_trial(cfg, n, lo + i, experiment); });
  std::vector<TrialRecord> out;
  for (auto& v : per) std::move(v.begin(), v.end(), std::back_inserter(out));
  return out;
}

std::vector<SummaryRow> summarize_sweep(std::span<const TrialRecord> records) {
  struct Acc {
    SummaryRow row;
    std::vector<double> overlap, overlap_sq, aligned;
  };
  // Key keeps rows ordered by (N, k, column label).
  std::map<std::tuple<std::size_t, std::uint64_t, std::string>, Acc> groups;
  for (const TrialRecord& r : records) {
    Acc& a = groups[{r.n, r.k, r.column}];
    a.row.n = r.n;
    a.row.eigen_index = r.eigen_index;
    a.row.q = r.q;
    a.row.column = r.column;
    a.row.alpha = r.alpha;
    a.row.k = r.k;
    ++a.row.trials;
    if (!r.usable()) {
      ++a.row.flagged;
      continue;
    }
    a.overlap.push_back(r.overlap);
    a.overlap_sq.push_back(r.overlap * r.overlap);
    a.aligned.push_back(r.aligned_inf_dist);
  }
  std::vector<SummaryRow> out;
  for (auto& [key, a] : groups) {
    a.row.used = a.overlap.size();
    a.row.overlap = stats::mean_se(a.overlap);
    a.row.overlap_sq = stats::mean_se(a.overlap_sq);
    a.row.aligned = stats::mean_se(a.aligned);
    out.push_back(a.row);
  }
  return out;
}

std::string summary_csv(std::span<const SummaryRow> rows, const std::vector<std::string>& header) {
  CsvTable t({"n", "q", "column", "alpha", "k", "eigen_index", "trials", "used", "flagged", "mean_overlap",
              "se_overlap", "mean_overlap_sq", "se_overlap_sq", "mean_aligned_inf_dist", "se_aligned_inf_dist"});
  for (const SummaryRow& r : rows) {
    t.add_row({cell(std::uint64_t{r.n}), cell(r.q), r.column, cell(r.alpha), cell(r.k),
               cell(std::uint64_t{r.eigen_index}), cell(std::uint64_t{r.trials}), cell(std::uint64_t{r.used}),
               cell(std::uint64_t{r.flagged}), cell(r.overlap.mean), cell(r.overlap.se), cell(r.overlap_sq.mean),
               cell(r.overlap_sq.se), cell(r.aligned.mean), cell(r.aligned.se)});
  }
  return t.render(header);
}

SweepResult sensitivity_sweep(const SweepConfig& cfg, const std::string& experiment) {
  cfg.validate();
  SweepResult out;
  for (const std::size_t n : cfg.ns) {
    auto batch = run_sweep_batch(cfg, n, 0, cfg.trials, experiment);
    std::move(batch.begin(), batch.end(), std::back_inserter(out.records));
  }
  out.summary = summarize_sweep(out.records);
  return out;
}

double overlap_trend(std::span<const SummaryRow> rows, std::size_t n) {
  std::vector<double> k, y;
  for (const SummaryRow& r : rows) {
    if (r.n != n || r.used == 0) continue;
    k.push_back(static_cast<double>(r.k));
    y.push_back(r.overlap.mean);
  }
  return stats::spearman(k, y);
}

// ---------------------------------------------------------------------------
// Scaling collapse

std::vector<CollapseReport> scaling_collapse(std::span<const Curve> curves, std::span<const double> exponents,
                                             std::size_t grid_points) {
  std::vector<std::size_t> sizes;
  for (const Curve& c : curves) {
    if (c.k.size() != c.y.size()) throw std::invalid_argument("scaling_collapse: curve length mismatch");
    if (c.k.size() < 2) throw CollapseError("scaling_collapse: every curve needs two or more points");
    sizes.push_back(c.n);
  }
  std::sort(sizes.begin(), sizes.end());
  if (std::unique(sizes.begin(), sizes.end()) - sizes.begin() < 3) {
    throw CollapseError("scaling_collapse: needs curves at three or more distinct N");
  }
  if (grid_points < 2) throw std::invalid_argument("scaling_collapse: grid needs two or more points");

  std::vector<CollapseReport> out;
  for (const double e : exponents) {
    CollapseReport rep;
    rep.exponent = e;
    rep.lo = -std::numeric_limits<double>::infinity();
    rep.hi = std::numeric_limits<double>::infinity();
    std::vector<std::vector<std::pair<double, double>>> pts;
    for (const Curve& c : curves) {
      std::vector<std::pair<double, double>> p;
      for (std::size_t i = 0; i < c.k.size(); ++i) {
        if (!(c.k[i] > 0.0)) throw std::invalid_argument("scaling_collapse: k must be positive");
        p.emplace_back(std::log(c.k[i] * c.k_scale) - e * std::log(static_cast<double>(c.n)), c.y[i]);
      }
      std::sort(p.begin(), p.end());
      // Duplicate abscissae (capped k) are averaged.
      std::vector<std::pair<double, double>> u;
      for (std::size_t i = 0; i < p.size();) {
        std::size_t j = i;
        double s = 0.0;
        while (j < p.size() && p[j].first == p[i].first) s += p[j++].second;
        u.emplace_back(p[i].first, s / static_cast<double>(j - i));
        i = j;
      }
      if (u.size() < 2) throw CollapseError("scaling_collapse: a curve has fewer than two distinct k");
      rep.lo = std::max(rep.lo, u.front().first);
      rep.hi = std::min(rep.hi, u.back().first);
      pts.push_back(std::move(u));
    }
    if (!(rep.hi > rep.lo)) {
      throw CollapseError("scaling_collapse: rescaled k ranges do not overlap at exponent " + format_double(e));
    }
    rep.grid.resize(grid_points);
    for (std::size_t g = 0; g < grid_points; ++g) {
      rep.grid[g] = rep.lo + (rep.hi - rep.lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    }
    for (const auto& u : pts) {
      std::vector<double> v(grid_points);
      std::size_t s = 0;
      for (std::size_t g = 0; g < grid_points; ++g) {
        const double x = rep.grid[g];
        while (s + 2 < u.size() && u[s + 1].first < x) ++s;
        const auto [x0, y0] = u[s];
        const auto [x1, y1] = u[s + 1];
        const double t = std::clamp((x - x0) / (x1 - x0), 0.0, 1.0);
        v[g] = y0 + t * (y1 - y0);
      }
      rep.values.push_back(std::move(v));
    }
    for (std::size_t g = 0; g < grid_points; ++g) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& v : rep.values) {
        lo = std::min(lo, v[g]);
        hi = std::max(hi, v[g]);
      }
      rep.error = std::max(rep.error, hi - lo);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

std::size_t best_exponent(std::span<const CollapseReport> reports) {
  if (reports.empty()) throw std::invalid_argument("best_exponent: no reports");
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].error < reports[best].error) best = i;
  }
  return best;
}

std::vector<Curve> curves_from_summary(std::span<const SummaryRow> rows, bool index_scaled) {
  std::map<std::size_t, Curve> by_n;
  for (const SummaryRow& r : rows) {
    if (r.k == 0 || r.used == 0) continue;
    Curve& c = by_n[r.n];
    c.n = r.n;
    if (index_scaled) {
      const double j = static_cast<double>(std::min(r.eigen_index, r.n - r.eigen_index));
      c.k_scale = std::pow(std::max(j, 1.0), 2.0 / 3.0);
    }
    c.k.push_back(static_cast<double>(r.k));
    c.y.push_back(r.overlap.mean);
  }
  std::vector<Curve> out;
  for (auto& [n, c] : by_n) out.push_back(std::move(c));
  return out;
}

std::string collapse_csv(std::span<const CollapseReport> reports, const std::vector<std::string>& header) {
  CsvTable t({"exponent", "collapse_error", "lo", "hi", "best"});
  const std::size_t best = reports.empty() ? 0 : best_exponent(reports);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const CollapseReport& r = reports[i];
    t.add_row({cell(r.exponent), cell(r.error), cell(r.lo), cell(r.hi), i == best ? "1" : "0"});
  }
  return t.render(header);
}

double threshold_crossing(const Curve& curve, double level) {
  std::vector<std::pair<double, double>> p;
  for (std::size_t i = 0; i < curve.k.size(); ++i) {
    if (curve.k[i] > 0.0) p.emplace_back(curve.k[i] * curve.k_scale, curve.y[i]);
  }
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const auto [k0, y0] = p[i];
    const auto [k1, y1] = p[i + 1];
    if (y0 >= level && y1 < level) {
      const double t = (y0 - level) / (y0 - y1);
      return std::exp(std::log(k0) + t * (std::log(k1) - std::log(k0)));
    }
  }
  return kNaN;
}

// ---------------------------------------------------------------------------
// Edge samples

std::vector<std::string> EdgeConfig::problems(std::size_t min_sizes) const {
  std::vector<std::string> out = size_problems(ns, q_rule, model, "ns");
  std::vector<std::size_t> distinct = ns;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < min_sizes) {
    out.push_back("ns: at least " + std::to_string(min_sizes) + " distinct sizes are required");
  }
  if (trials < 1) out.push_back("trials: must be at least 1");
  for (const double d : deltas) {
    if (!(d > 0.0)) out.push_back("deltas: " + format_double(d) + " must be positive");
  }
  if (policy.dense_cap < 2) out.push_back("dense_cap: must be at least 2");
  return out;
}

void EdgeConfig::validate(std::size_t min_sizes) const {
  auto p = problems(min_sizes);
  if (!p.empty()) throw ConfigError(std::move(p));
}

EnsembleSpec EdgeConfig::spec(std::size_t n) const { return EnsembleSpec{n, q_rule(n), law, model}; }

json EdgeConfig::to_json() const {
  return json{{"ns", ns},
              {"q_rule", q_rule.to_json()},
              {"trials", trials},
              {"seed", master_seed},
              {"model", std::string(to_string(model))},
              {"law", law_json(law)},
              {"deltas", deltas},
              {"dense_cap", policy.dense_cap}};
}

bool EdgeRecord::usable() const { return !has_flag(flags, "solver_failure") && !has_flag(flags, "degenerate_gap"); }

json EdgeRecord::to_json() const {
  json j{{"experiment", experiment}, {"seed", seed}, {"trial", trial}, {"n", n}, {"matvecs", matvecs},
         {"flags", flags_json(flags)}};
  put_number(j, "q", q);
  put_number(j, "lambda1", lambda1);
  put_number(j, "lambda2", lambda2);
  put_number(j, "chi", chi);
  return j;
}

EdgeRecord EdgeRecord::from_json(const json& j) {
  EdgeRecord r;
  r.experiment = j.at("experiment").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial = j.at("trial").get<std::uint64_t>();
  r.n = j.at("n").get<std::size_t>();
  r.q = get_number(j, "q");
  r.lambda1 = get_number(j, "lambda1");
  r.lambda2 = get_number(j, "lambda2");
  r.chi = get_number(j, "chi");
  r.matvecs = j.value("matvecs", 0);
  r.flags = flags_from(j);
  return r;
}

EdgeRecord run_edge_trial(const EdgeConfig& cfg, std::size_t n, std::uint64_t trial, const std::string& experiment) {
  const EnsembleSpec spec = cfg.spec(n);
  EdgeRecord r;
  r.experiment = experiment;
  r.seed = cfg.master_seed;
  r.trial = trial;
  r.n = n;
  r.q = spec.q;
  r.lambda1 = r.lambda2 = r.chi = kNaN;
  Stream rng = Stream::derive(cfg.master_seed, n, trial, Role::base);
  const SparseSymMatrix h = sample(spec, rng);
  r.chi = model_correction(h, spec);
  SolverPolicy policy = cfg.policy;
  policy.lanczos.seed = Stream::derive(cfg.master_seed, n, trial, Role::start).key();
  try {
    const TrackedEigen t = track_eigen(h, spec, 1, nullptr, policy);
    r.lambda1 = t.lambda1;
    r.lambda2 = t.lambda2;
    r.matvecs = t.matvecs;
    if (t.dense_fallback) add_flag(r.flags, "dense_fallback");
    if (t.gap < kDegenerateGap) add_flag(r.flags, "degenerate_gap");
  } catch (const std::exception&) {
    add_flag(r.flags, "solver_failure");
  }
  return r;
}

std::vector<EdgeRecord> run_edge_batch(const EdgeConfig& cfg, std::size_t n, std::uint64_t lo, std::uint64_t hi,
                                       const std::string& experiment) {
  std::vector<EdgeRecord> out(hi > lo ? hi - lo : 0);
  parallel_trials(out.size(), [&](std::size_t i) { out[i] = run_edge_trial(cfg, n, lo + i, experiment); });
  return out;
}

namespace {

std::map<std::size_t, std::vector<const EdgeRecord*>> group_edge(std::span<const EdgeRecord> records) {
  std::map<std::size_t, std::vector<const EdgeRecord*>> g;
  for (const EdgeRecord& r : records) g[r.n].push_back(&r);
  return g;
}

}  // namespace

VarianceReport variance_scan(std::span<const EdgeRecord> records, std::uint64_t bootstrap_seed) {
  VarianceReport rep;
  std::vector<double> log_n, log_v, log_raw;
  for (const auto& [n, group] : group_edge(records)) {
    std::vector<double> shifted, raw;
    VarianceRow row;
    row.n = n;
    for (const EdgeRecord* r : group) {
      row.q = r->q;
      // Only lambda1 is used here; a near-degenerate lambda2 does not matter.
      if (has_flag(r->flags, "solver_failure")) continue;
      shifted.push_back(r->lambda1 - r->chi);
      raw.push_back(r->lambda1);
    }
    row.used = shifted.size();
    if (shifted.size() < 4) continue;
    row.l_hat = stats::mean_se(shifted).mean;
    for (double& x : shifted) x -= row.l_hat;
    row.variance = stats::sample_variance(shifted);
    row.variance_se = stats::variance_se(shifted);
    row.ci = stats::bootstrap_ci(
        shifted, [](std::span<const double> s) { return stats::sample_variance(s); },
        Stream(bootstrap_seed).split(n));
    row.raw_variance = stats::sample_variance(raw);
    log_n.push_back(std::log(static_cast<double>(n)));
    log_v.push_back(std::log(row.variance));
    log_raw.push_back(std::log(row.raw_variance));
    rep.rows.push_back(row);
  }
  if (log_n.size() >= 2) {
    rep.fit = stats::fit_line(log_n, log_v);
    rep.raw_fit = stats::fit_line(log_n, log_raw);
  } else {
    rep.fit = rep.raw_fit = {kNaN, kNaN, kNaN, kNaN};
  }
  return rep;
}

std::string variance_csv(const VarianceReport& report, const std::vector<std::string>& header) {
  std::vector<std::string> h = header;
  h.push_back("slope=" + cell(report.fit.slope) + " slope_se=" + cell(report.fit.slope_se));
  h.push_back("raw_slope=" + cell(report.raw_fit.slope) + " raw_slope_se=" + cell(report.raw_fit.slope_se));
  CsvTable t({"n", "q", "used", "l_hat", "variance", "variance_se", "ci_lo", "ci_hi", "raw_variance"});
  for (const VarianceRow& r : report.rows) {
    t.add_row({cell(std::uint64_t{r.n}), cell(r.q), cell(std::uint64_t{r.used}), cell(r.l_hat), cell(r.variance),
               cell(r.variance_se), cell(r.ci.lo), cell(r.ci.hi), cell(r.raw_variance)});
  }
  return t.render(h);
}

GapReport gap_report(std::span<const EdgeRecord> records, std::span<const double> deltas,
                     std::uint64_t bootstrap_seed) {
  GapReport rep;
  rep.deltas.assign(deltas.begin(), deltas.end());
  std::vector<std::size_t> order(deltas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return deltas[a] < deltas[b]; });
  std::vector<double> log_n, log_med;
  for (const auto& [n, group] : group_edge(records)) {
    GapRow row;
    row.n = n;
    std::vector<double> gaps;
    for (const EdgeRecord* r : group) {
      row.q = r->q;
      // Tiny gaps are the statistic here, so only solver failures are dropped.
      if (has_flag(r->flags, "solver_failure")) continue;
      gaps.push_back(std::max(0.0, r->lambda1 - r->lambda2));
    }
    row.used = gaps.size();
    if (gaps.size() < 2) continue;
    const double nn = static_cast<double>(n);
    row.median_gap = stats::median(gaps);
    row.median_ci = stats::bootstrap_ci(
        gaps, [](std::span<const double> s) { return stats::median(s); }, Stream(bootstrap_seed).split(n));
    for (const double d : deltas) {
      const double cut = d / nn;
      const double hits = static_cast<double>(std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g <= cut; }));
      const double p = hits / static_cast<double>(gaps.size());
      row.tail.push_back(p);
      row.tail_se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(gaps.size())));
      rep.fitted_c = std::max(rep.fitted_c, p / (d * std::log(nn)));
    }
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      if (row.tail[order[i + 1]] < row.tail[order[i]]) rep.tail_monotone = false;
    }
    log_n.push_back(std::log(nn));
    log_med.push_back(std::log(row.median_gap));
    rep.rows.push_back(std::move(row));
  }
  rep.median_fit = log_n.size() >= 2 ? stats::fit_line(log_n, log_med) : stats::LineFit{kNaN, kNaN, kNaN, kNaN};
  return rep;
}

std::string gap_csv(const GapReport& report, const std::vector<std::string>& header) {
  std::vector<std::string> h = header;
  h.push_back("median_slope=" + cell(report.median_fit.slope) + " median_slope_se=" + cell(report.median_fit.slope_se));
  h.push_back("fitted_c=" + cell(report.fitted_c) + " tail_monotone=" + (report.tail_monotone ? "1" : "0"));
  std::vector<std::string> cols{"n", "q", "used", "median_gap", "median_ci_lo", "median_ci_hi"};
  for (const double d : report.deltas) {
    cols.push_back("p_delta_" + format_double(d));
    cols.push_back("se_delta_" + format_double(d));
  }
  CsvTable t(cols);
  for (const GapRow& r : report.rows) {
    std::vector<std::string> c{cell(std::uint64_t{r.n}), cell(r.q),          cell(std::uint64_t{r.used}),
                               cell(r.median_gap),       cell(r.median_ci.lo), cell(r.median_ci.hi)};
    for (std::size_t i = 0; i < r.tail.size(); ++i) {
      c.push_back(cell(r.tail[i]));
      c.push_back(cell(r.tail_se[i]));
    }
    t.add_row(std::move(c));
  }
  return t.render(h);
}

// ---------------------------------------------------------------------------
// Overlap against variance

HmainReport hmain1_check(std::span<const TrialRecord> records) {
  HmainReport rep;
  std::map<std::size_t, std::vector<double>> base;
  std::map<std::pair<std::size_t, std::uint64_t>, std::pair<std::optional<double>, std::vector<double>>> cols;
  for (const TrialRecord& r : records) {
    if (!r.usable()) continue;
    if (r.k == 0) {
      base[r.n].push_back(r.lambda1 - r.chi);
    } else {
      auto& c = cols[{r.n, r.k}];
      c.first = r.alpha;
      c.second.push_back(r.overlap * r.overlap);
    }
  }
  std::map<std::size_t, std::vector<const HmainRow*>> by_n;
  for (const auto& [key, c] : cols) {
    const auto [n, k] = key;
    const auto it = base.find(n);
    if (it == base.end() || it->second.size() < 2) continue;
    HmainRow row;
    row.n = n;
    row.k = k;
    row.alpha = c.first;
    const stats::MeanSe m = stats::mean_se(c.second);
    row.mean_overlap_sq = m.mean;
    row.mean_overlap_sq_se = m.se;
    row.variance = stats::sample_variance(it->second);
    row.rhs = std::pow(static_cast<double>(n), 3.0) * row.variance / static_cast<double>(k);
    row.ratio = row.mean_overlap_sq / row.rhs;
    row.ratio_se = row.mean_overlap_sq_se / row.rhs;
    rep.max_ratio = std::max(rep.max_ratio, row.ratio);
    rep.rows.push_back(row);
  }
  // Trend: within 3 SE, ratio does not grow with k.
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    const HmainRow& a = rep.rows[i];
    const HmainRow& b = rep.rows[i + 1];
    if (a.n != b.n) continue;
    if (b.ratio > a.ratio + 3.0 * std::hypot(a.ratio_se, b.ratio_se)) rep.decreasing = false;
  }
  return rep;
}

std::string hmain_csv(const HmainReport& report, const std::vector<std::string>& header) {
  std::vector<std::string> h = header;
  h.push_back("max_ratio=" + cell(report.max_ratio) + " decreasing=" + (report.decreasing ? "1" : "0"));
  CsvTable t({"n", "k", "alpha", "mean_overlap_sq", "se_overlap_sq", "variance", "rhs", "ratio", "ratio_se"});
  for (const HmainRow& r : report.rows) {
    t.add_row({cell(std::uint64_t{r.n}), cell(r.k), cell(r.alpha), cell(r.mean_overlap_sq),
               cell(r.mean_overlap_sq_se), cell(r.variance), cell(r.rhs), cell(r.ratio), cell(r.ratio_se)});
  }
  return t.render(h);
}

// ---------------------------------------------------------------------------
// Sticking

json StickingRecord::to_json() const {
  json j{{"experiment", experiment}, {"seed", seed}, {"trial", trial}, {"n", n}, {"flags", flags_json(flags)}};
  put_number(j, "q", q);
  put_number(j, "nu2", nu2);
  put_number(j, "nu_centered1", nu_centered1);
  put_number(j, "a", a);
  put_number(j, "residual", residual);
  return j;
}

StickingRecord StickingRecord::from_json(const json& j) {
  StickingRecord r;
  r.experiment = j.at("experiment").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial = j.at("trial").get<std::uint64_t>();
  r.n = j.at("n").get<std::size_t>();
  r.q = get_number(j, "q");
  r.nu2 = get_number(j, "nu2");
  r.nu_centered1 = get_number(j, "nu_centered1");
  r.a = get_number(j, "a");
  r.residual = get_number(j, "residual");
  r.flags = flags_from(j);
  return r;
}

StickingRecord run_sticking_trial(const EdgeConfig& cfg, std::size_t n, std::uint64_t trial) {
  StickingRecord r;
  r.experiment = "sticking";
  r.seed = cfg.master_seed;
  r.trial = trial;
  r.n = n;
  r.q = cfg.q_rule(n);
  r.nu2 = r.nu_centered1 = r.a = r.residual = kNaN;
  Stream rng = Stream::derive(cfg.master_seed, n, trial, Role::base);
  const SparseSymMatrix adj = sample_er(n, r.q, rng);
  SolverPolicy policy = cfg.policy;
  policy.lanczos.seed = Stream::derive(cfg.master_seed, n, trial, Role::start).key();
  try {
    const EnsembleSpec adj_spec{n, r.q, cfg.law, Model::er_adjacency};
    const EnsembleSpec cen_spec{n, r.q, cfg.law, Model::er_centered};
    r.nu2 = track_eigen(adj, adj_spec, 2, nullptr, policy).value;
    r.nu_centered1 = track_eigen(adj, cen_spec, 1, nullptr, policy).value;
    r.a = center_er(adj, r.q).a;
    r.residual = static_cast<double>(n) * std::abs(r.nu2 - (r.nu_centered1 - r.a));
  } catch (const std::exception&) {
    add_flag(r.flags, "solver_failure");
  }
  return r;
}

std::vector<StickingRecord> run_sticking_batch(const EdgeConfig& cfg, std::size_t n, std::uint64_t lo,
                                               std::uint64_t hi) {
  std::vector<StickingRecord> out(hi > lo ? hi - lo : 0);
  parallel_trials(out.size(), [&](std::size_t i) { out[i] = run_sticking_trial(cfg, n, lo + i); });
  return out;
}

StickingReport sticking_report(std::span<const StickingRecord> records, std::uint64_t bootstrap_seed) {
  std::map<std::size_t, StickingRow> rows;
  std::map<std::size_t, std::vector<double>> values;
  for (const StickingRecord& r : records) {
    rows[r.n].n = r.n;
    rows[r.n].q = r.q;
    if (!has_flag(r.flags, "solver_failure") && std::isfinite(r.residual)) values[r.n].push_back(r.residual);
  }
  StickingReport rep;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (auto& [n, row] : rows) {
    const auto& v = values[n];
    row.used = v.size();
    if (v.empty()) continue;
    row.median = stats::median(v);
    row.ci = stats::bootstrap_ci(
        v, [](std::span<const double> s) { return stats::median(s); }, Stream(bootstrap_seed).split(n));
    lo = std::min(lo, row.median);
    hi = std::max(hi, row.median);
    rep.rows.push_back(row);
  }
  rep.spread = rep.rows.empty() ? kNaN : hi / lo;
  return rep;
}

std::string sticking_csv(const StickingReport& report, const std::vector<std::string>& header) {
  std::vector<std::string> h = header;
  h.push_back("spread=" + cell(report.spread));
  CsvTable t({"n", "q", "used", "median_residual", "ci_lo", "ci_hi"});
  for (const StickingRow& r : report.rows) {
    t.add_row({cell(std::uint64_t{r.n}), cell(r.q), cell(std::uint64_t{r.used}), cell(r.median), cell(r.ci.lo),
               cell(r.ci.hi)});
  }
  return t.render(h);
}

// ---------------------------------------------------------------------------
// Resolvent drift

std::vector<std::string> DriftConfig::problems() const {
  std::vector<std::string> out = size_problems({n}, q_rule, Model::centered_sparse, "n");
  if (trials < 1) out.push_back("trials: must be at least 1");
  if (!(alpha > 0.0)) out.push_back("alpha: must be positive");
  if (!(delta > 0.0)) out.push_back("delta: must be positive");
  if (points < 1) out.push_back("points: must be at least 1");
  if (n > dense_cap) out.push_back("n: the drift statistic needs a full eigendecomposition (N <= dense_cap)");
  return out;
}

void DriftConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

std::uint64_t DriftConfig::k() const { return alpha_k(n, alpha); }

json DriftConfig::to_json() const {
  return json{{"n", n},         {"q_rule", q_rule.to_json()}, {"alpha", alpha},   {"trials", trials},
              {"seed", master_seed}, {"law", law_json(law)},  {"delta", delta},   {"points", points},
              {"dense_cap", dense_cap}};
}

json DriftRecord::to_json() const {
  json j{{"experiment", experiment}, {"seed", seed}, {"trial", trial}, {"n", n}, {"k", k},
         {"flags", flags_json(flags)}};
  put_number(j, "q", q);
  put_number(j, "chi", chi);
  put_number(j, "edge", edge);
  put_number(j, "eta", eta);
  put_number(j, "drift", drift);
  put_number(j, "drift_contrast", drift_contrast);
  put_number(j, "lambda1", lambda1);
  put_number(j, "lambda1_k", lambda1_k);
  put_number(j, "lambda1_contrast", lambda1_contrast);
  put_number(j, "lambda1_drift_norm", lambda1_drift_norm);
  put_number(j, "lambda1_contrast_drift_norm", lambda1_contrast_drift_norm);
  put_number(j, "eigvec_link", eigvec_link);
  return j;
}

DriftRecord DriftRecord::from_json(const json& j) {
  DriftRecord r;
  r.experiment = j.at("experiment").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial = j.at("trial").get<std::uint64_t>();
  r.n = j.at("n").get<std::size_t>();
  r.k = j.at("k").get<std::uint64_t>();
  r.q = get_number(j, "q");
  r.chi = get_number(j, "chi");
  r.edge = get_number(j, "edge");
  r.eta = get_number(j, "eta");
  r.drift = get_number(j, "drift");
  r.drift_contrast = get_number(j, "drift_contrast");
  r.lambda1 = get_number(j, "lambda1");
  r.lambda1_k = get_number(j, "lambda1_k");
  r.lambda1_contrast = get_number(j, "lambda1_contrast");
  r.lambda1_drift_norm = get_number(j, "lambda1_drift_norm");
  r.lambda1_contrast_drift_norm = get_number(j, "lambda1_contrast_drift_norm");
  r.eigvec_link = get_number(j, "eigvec_link");
  r.flags = flags_from(j);
  return r;
}

DriftRecord run_drift_trial(const DriftConfig& cfg, std::uint64_t trial) {
  const std::size_t n = cfg.n;
  const EnsembleSpec spec{n, cfg.q_rule(n), cfg.law, Model::centered_sparse};
  DriftRecord r;
  r.experiment = "resolvent";
  r.seed = cfg.master_seed;
  r.trial = trial;
  r.n = n;
  r.q = spec.q;
  r.k = cfg.k();
  const ResamplePair pair =
      make_resample_pair(spec, Stream::derive(cfg.master_seed, n, trial, Role::base),
                         Stream::derive(cfg.master_seed, n, trial, Role::fresh),
                         Stream::derive(cfg.master_seed, n, trial, Role::order), r.k);
  r.chi = correction_term(pair.base());
  EdgeModel model;
  model.chi = r.chi;
  model.n = n;
  model.q = spec.q;
  r.edge = edge_location(model);
  const DriftWindow window = drift_window(r.edge, n, cfg.delta, cfg.points);
  r.eta = window.eta;

  const SpectralResolvent base = SpectralResolvent::from_sparse(pair.base(), cfg.dense_cap);
  const SpectralResolvent resampled = SpectralResolvent::from_sparse(pair.resample_to(r.k), cfg.dense_cap);
  const SpectralResolvent contrast = SpectralResolvent::from_sparse(pair.fresh(), cfg.dense_cap);
  r.drift = resolvent_drift(base, resampled, window);
  r.drift_contrast = resolvent_drift(base, contrast, window);
  r.lambda1 = base.values()[0];
  r.lambda1_k = resampled.values()[0];
  r.lambda1_contrast = contrast.values()[0];
  r.lambda1_drift_norm = lambda1_drift(r.lambda1, r.lambda1_k, n, cfg.delta).normalized;
  r.lambda1_contrast_drift_norm = lambda1_drift(r.lambda1, r.lambda1_contrast, n, cfg.delta).normalized;
  r.eigvec_link = eigvec_link_residual(base, cfg.delta);
  return r;
}

std::vector<DriftRecord> run_drift_batch(const DriftConfig& cfg, std::uint64_t lo, std::uint64_t hi) {
  std::vector<DriftRecord> out(hi > lo ? hi - lo : 0);
  parallel_trials(out.size(), [&](std::size_t i) { out[i] = run_drift_trial(cfg, lo + i); });
  return out;
}

DriftReport drift_report(std::span<const DriftRecord> records) {
  DriftReport rep;
  rep.trials = records.size();
  if (records.empty()) return rep;
  rep.threshold = std::pow(static_cast<double>(records.front().n), -0.02);
  std::vector<double> d, c, l;
  std::size_t small = 0, large = 0;
  for (const DriftRecord& r : records) {
    d.push_back(r.drift);
    c.push_back(r.drift_contrast);
    l.push_back(r.lambda1_drift_norm);
    if (r.drift <= rep.threshold) ++small;
    if (r.drift_contrast > 0.5) ++large;
    if (!(r.drift_contrast > 0.0)) rep.contrast_exceeds_zero = false;
  }
  const double t = static_cast<double>(records.size());
  rep.frac_small = static_cast<double>(small) / t;
  rep.frac_contrast_large = static_cast<double>(large) / t;
  rep.median_drift = stats::median(d);
  rep.median_contrast = stats::median(c);
  rep.median_lambda1_norm = stats::median(l);
  return rep;
}

std::string drift_csv(std::span<const DriftRecord> records, const std::vector<std::string>& header) {
  const DriftReport rep = drift_report(records);
  std::vector<std::string> h = header;
  h.push_back("threshold=" + cell(rep.threshold) + " frac_small=" + cell(rep.frac_small) +
              " frac_contrast_large=" + cell(rep.frac_contrast_large));
  CsvTable t({"trial", "n", "q", "k", "eta", "drift", "drift_contrast", "lambda1_drift_norm",
              "lambda1_contrast_drift_norm", "eigvec_link"});
  for (const DriftRecord& r : records) {
    t.add_row({cell(r.trial), cell(std::uint64_t{r.n}), cell(r.q), cell(r.k), cell(r.eta), cell(r.drift),
               cell(r.drift_contrast), cell(r.lambda1_drift_norm), cell(r.lambda1_contrast_drift_norm),
               cell(r.eigvec_link)});
  }
  return t.render(h);
}

}  // namespace rmt
