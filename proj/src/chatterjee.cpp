#include "rmt/chatterjee.hpp"

#include "rmt/resample.hpp"
#include "rmt/spectral.hpp"
#include "rmt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace rmt {

namespace {

void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("chatterjee: vector length mismatch");
}

}  // namespace

std::vector<double> replace_one(std::span<const double> y, std::span<const double> y1, std::size_t j) {
  check_same(y.size(), y1.size());
  if (j >= y.size()) throw std::out_of_range("replace_one: index out of range");
  std::vector<double> out(y.begin(), y.end());
  out[j] = y1[j];
  return out;
}

std::vector<double> resample_set(std::span<const double> y, std::span<const double> y1,
                                 std::span<const std::size_t> set) {
  check_same(y.size(), y1.size());
  std::vector<double> out(y.begin(), y.end());
  for (const std::size_t i : set) {
    if (i >= y.size()) throw std::out_of_range("resample_set: index out of range");
    out[i] = y1[i];
  }
  return out;
}

std::vector<double> resample_set_then_one(std::span<const double> y, std::span<const double> y1,
                                          std::span<const double> y2, std::span<const double> y3,
                                          std::span<const std::size_t> sigma, std::size_t prefix, std::size_t j) {
  check_same(y.size(), y2.size());
  check_same(y.size(), y3.size());
  if (prefix > sigma.size()) throw std::out_of_range("resample_set_then_one: prefix exceeds the permutation");
  const auto set = sigma.first(prefix);
  std::vector<double> out = resample_set(y, y1, set);
  if (j >= y.size()) throw std::out_of_range("resample_set_then_one: index out of range");
  const bool inside = std::find(set.begin(), set.end(), j) != set.end();
  out[j] = inside ? y2[j] : y3[j];
  return out;
}

std::vector<IkEstimate> chatterjee_ik(const std::function<double(std::span<const double>)>& f,
                                      const std::function<double(Stream&)>& sampler, std::size_t n_vars,
                                      std::span<const std::uint64_t> ks, std::size_t trials, std::uint64_t seed) {
  if (n_vars < 1 || trials < 2) throw std::invalid_argument("chatterjee_ik: needs n >= 1 and two or more trials");
  std::uint64_t k_max = 1;
  for (const std::uint64_t k : ks) {
    if (k < 1 || k > n_vars) throw std::invalid_argument("chatterjee_ik: k must lie in [1, n]");
    k_max = std::max(k_max, k);
  }
  std::vector<std::vector<double>> products(ks.size());
  std::vector<double> values;
  std::vector<double> y(n_vars), y1(n_vars), y2(n_vars), y3(n_vars);
  for (std::size_t t = 0; t < trials; ++t) {
    Stream coords = Stream::derive(seed, t, Role::base);
    for (std::size_t i = 0; i < n_vars; ++i) y[i] = sampler(coords);
    Stream c1 = Stream::derive(seed, t, Role::fresh);
    for (std::size_t i = 0; i < n_vars; ++i) y1[i] = sampler(c1);
    Stream c2 = Stream::derive(seed, t, Role::copy2);
    for (std::size_t i = 0; i < n_vars; ++i) y2[i] = sampler(c2);
    Stream c3 = Stream::derive(seed, t, Role::copy3);
    for (std::size_t i = 0; i < n_vars; ++i) y3[i] = sampler(c3);
    Stream order = Stream::derive(seed, t, Role::order);
    const std::vector<std::uint64_t> perm = partial_permutation(n_vars, n_vars, order);
    const std::vector<std::size_t> sigma(perm.begin(), perm.end());
    Stream pick = Stream::derive(seed, t, Role::index);
    const std::size_t j = pick.below(n_vars);

    const double fy = f(y);
    const double fj = f(replace_one(y, y1, j));
    values.push_back(fy);
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const std::size_t prefix = ks[c] - 1;
      const double fs = f(resample_set(y, y1, std::span(sigma).first(prefix)));
      const double fsj = f(resample_set_then_one(y, y1, y2, y3, sigma, prefix, j));
      products[c].push_back((fy - fj) * (fs - fsj));
    }
  }
  const double var = stats::sample_variance(values);
  const double nn = static_cast<double>(n_vars);
  std::vector<IkEstimate> out;
  for (std::size_t c = 0; c < ks.size(); ++c) {
    const stats::MeanSe m = stats::mean_se(products[c]);
    out.push_back({ks[c], m.mean, m.se, var, (nn + 1.0) / nn * 2.0 * var / static_cast<double>(ks[c]), trials});
  }
  return out;
}

double linear_ik(std::size_t n_vars, std::uint64_t k, double coordinate_variance) {
  const double n = static_cast<double>(n_vars);
  return coordinate_variance * (1.0 - 2.0 * static_cast<double>(k - 1) / n);
}

std::vector<std::string> ChatterjeeConfig::problems() const {
  std::vector<std::string> out;
  try {
    EnsembleSpec{n, q_rule(n), law, Model::centered_sparse}.validate();
  } catch (const std::exception& e) {
    out.push_back(std::string("n/q_rule: ") + e.what());
  }
  if (trials < 2) out.push_back("trials: must be at least 2");
  if (ks.empty()) out.push_back("ks: at least one k is required");
  for (const std::uint64_t k : ks) {
    if (k < 1 || (n >= 2 && k > pair_count(n))) {
      out.push_back("ks: k=" + std::to_string(k) + " must lie in [1, M]");
    }
  }
  return out;
}

void ChatterjeeConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

json ChatterjeeConfig::to_json() const {
  return json{{"n", n},
              {"q_rule", q_rule.to_json()},
              {"ks", ks},
              {"trials", trials},
              {"seed", master_seed},
              {"law", json{{"kind", std::string(to_string(law.kind))}, {"subgaussian_param", law.subgaussian_param}}}};
}

json ChatterjeeRecord::to_json() const {
  json j{{"experiment", "chatterjee"}, {"seed", seed}, {"trial", trial}, {"n", n}, {"j", this->j},
         {"ks", ks}, {"flags", flags}};
  put_number(j, "q", q);
  put_number(j, "f", f);
  put_number(j, "f_j", f_j);
  json a = json::array();
  json b = json::array();
  for (std::size_t i = 0; i < f_sigma.size(); ++i) {
    a.push_back(std::isfinite(f_sigma[i]) ? json(f_sigma[i]) : json(nullptr));
    b.push_back(std::isfinite(f_sigma_j[i]) ? json(f_sigma_j[i]) : json(nullptr));
  }
  j["f_sigma"] = a;
  j["f_sigma_j"] = b;
  return j;
}

ChatterjeeRecord ChatterjeeRecord::from_json(const json& j) {
  ChatterjeeRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial = j.at("trial").get<std::uint64_t>();
  r.n = j.at("n").get<std::size_t>();
  r.q = get_number(j, "q");
  r.j = j.at("j").get<std::uint64_t>();
  r.f = get_number(j, "f");
  r.f_j = get_number(j, "f_j");
  r.ks = j.at("ks").get<std::vector<std::uint64_t>>();
  auto nums = [](const json& arr) {
    std::vector<double> v;
    for (const json& x : arr) v.push_back(x.is_null() ? std::nan("") : x.get<double>());
    return v;
  };
  r.f_sigma = nums(j.at("f_sigma"));
  r.f_sigma_j = nums(j.at("f_sigma_j"));
  r.flags = j.at("flags").get<std::vector<std::string>>();
  return r;
}

ChatterjeeRecord run_chatterjee_trial(const ChatterjeeConfig& cfg, std::uint64_t trial) {
  const std::size_t n = cfg.n;
  const EnsembleSpec spec{n, cfg.q_rule(n), cfg.law, Model::centered_sparse};
  const std::uint64_t m = pair_count(n);
  ChatterjeeRecord r;
  r.seed = cfg.master_seed;
  r.trial = trial;
  r.n = n;
  r.q = spec.q;
  r.ks = cfg.ks;

  auto stream = [&](Role role) { return Stream::derive(cfg.master_seed, n, trial, role); };
  Stream base_rng = stream(Role::base);
  const Eigen::MatrixXd h = sample_sparse(spec, base_rng).dense();

  // Coordinates of Y', Y'' and Y''' are drawn on demand, each from its own
  // substream keyed by the pair, so only the touched ones are generated.
  auto coordinate = [&](Role role, std::uint64_t key) {
    const PairIndex p = decode_pair(n, key);
    Stream s = stream(role).split(key);
    return draw_entry(spec, p.row, p.col, s);
  };
  auto set = [](Eigen::MatrixXd& a, const PairIndex& p, double v) {
    a(p.row, p.col) = v;
    a(p.col, p.row) = v;
  };
  auto f = [](const Eigen::MatrixXd& a) {
    const double chi = a.squaredNorm() / static_cast<double>(a.rows()) - 1.0;
    return dense_extreme(a, 1, Which::largest).values[0] - chi;
  };

  std::uint64_t k_max = 1;
  for (const std::uint64_t k : cfg.ks) k_max = std::max(k_max, k);
  Stream order_rng = stream(Role::order);
  const std::vector<std::uint64_t> sigma = partial_permutation(m, k_max - 1, order_rng);
  Stream pick = stream(Role::index);
  r.j = pick.below(m);
  const PairIndex pj = decode_pair(n, r.j);

  try {
    r.f = f(h);
    Eigen::MatrixXd hj = h;
    set(hj, pj, coordinate(Role::fresh, r.j));
    r.f_j = f(hj);

    std::vector<std::uint64_t> order(cfg.ks.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cfg.ks[a] < cfg.ks[b]; });
    r.f_sigma.assign(cfg.ks.size(), std::nan(""));
    r.f_sigma_j.assign(cfg.ks.size(), std::nan(""));
    Eigen::MatrixXd hs = h;
    std::unordered_set<std::uint64_t> inside;
    std::uint64_t filled = 0;
    for (const std::size_t c : order) {
      const std::uint64_t prefix = cfg.ks[c] - 1;
      for (; filled < prefix; ++filled) {
        const std::uint64_t key = sigma[filled];
        set(hs, decode_pair(n, key), coordinate(Role::fresh, key));
        inside.insert(key);
      }
      r.f_sigma[c] = f(hs);
      Eigen::MatrixXd hsj = hs;
      set(hsj, pj, coordinate(inside.count(r.j) ? Role::copy2 : Role::copy3, r.j));
      r.f_sigma_j[c] = f(hsj);
    }
  } catch (const std::exception&) {
    r.flags.push_back("solver_failure");
  }
  return r;
}

std::vector<ChatterjeeRecord> run_chatterjee_batch(const ChatterjeeConfig& cfg, std::uint64_t lo, std::uint64_t hi) {
  std::vector<ChatterjeeRecord> out(hi > lo ? hi - lo : 0);
  const auto count = static_cast<std::ptrdiff_t>(out.size());
  std::vector<std::exception_ptr> errors(out.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_chatterjee_trial(cfg, lo + static_cast<std::uint64_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<IkEstimate> chatterjee_estimates(std::span<const ChatterjeeRecord> records) {
  std::vector<const ChatterjeeRecord*> ok;
  for (const ChatterjeeRecord& r : records) {
    if (r.flags.empty()) ok.push_back(&r);
  }
  if (ok.size() < 2) throw std::invalid_argument("chatterjee_estimates: needs two or more usable trials");
  const std::vector<std::uint64_t>& ks = ok.front()->ks;
  const double m = static_cast<double>(pair_count(ok.front()->n));
  std::vector<double> values;
  for (const auto* r : ok) values.push_back(r->f);
  const double var = stats::sample_variance(values);
  std::vector<IkEstimate> out;
  for (std::size_t c = 0; c < ks.size(); ++c) {
    std::vector<double> prod;
    for (const auto* r : ok) {
      if (r->ks != ks) throw std::invalid_argument("chatterjee_estimates: records disagree on k");
      prod.push_back((r->f - r->f_j) * (r->f_sigma[c] - r->f_sigma_j[c]));
    }
    const stats::MeanSe s = stats::mean_se(prod);
    out.push_back({ks[c], s.mean, s.se, var, (m + 1.0) / m * 2.0 * var / static_cast<double>(ks[c]), ok.size()});
  }
  return out;
}

std::string chatterjee_csv(std::span<const IkEstimate> rows, const std::vector<std::string>& header) {
  CsvTable t({"k", "trials", "estimate", "se", "variance", "bound", "within_bound"});
  for (const IkEstimate& r : rows) {
    t.add_row({cell(r.k), cell(std::uint64_t{r.trials}), cell(r.estimate), cell(r.se), cell(r.variance),
               cell(r.bound), r.within_bound() ? "1" : "0"});
  }
  return t.render(header);
}

}  // namespace rmt
