#include "rmt/commands.hpp"

#include "rmt/ensemble.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <type_traits>

namespace rmt {

namespace fs = std::filesystem;

namespace {

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

template <class T>
bool convertible(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.template get<long long>() >= 0);
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else if constexpr (is_vector<T>::value) {
    if (!v.is_array()) return false;
    return std::all_of(v.begin(), v.end(), [](const json& e) { return convertible<typename T::value_type>(e); });
  } else {
    return false;
  }
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "a non-negative integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (is_vector<T>::value) return "an array";
  else return "a value";
}

// Reads keys of one config object, recording every problem instead of
// stopping at the first.
class Reader {
 public:
  Reader(const json& j, std::string prefix, std::vector<std::string>& problems)
      : j_(j), prefix_(std::move(prefix)), problems_(problems) {
    if (!j_.is_object()) problem("", "must be a JSON object");
  }

  [[nodiscard]] bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  template <class T>
  bool get(const char* key, T& out) {
    used_.insert(key);
    if (!has(key)) return false;
    const json& v = j_.at(key);
    if (!convertible<T>(v)) {
      problem(key, std::string("must be ") + type_name<T>());
      return false;
    }
    out = v.get<T>();
    return true;
  }

  void q_rule(const char* key, QRule& out) {
    used_.insert(key);
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_object() || !v.contains("kind") || !v.contains("value") || !v["kind"].is_string() ||
        !v["value"].is_number() || v.size() != 2) {
      problem(key, R"(must be {"kind": "power" | "constant", "value": number})");
      return;
    }
    const std::string kind = v["kind"].get<std::string>();
    if (kind == "power") {
      out.kind = QRule::Kind::power;
    } else if (kind == "constant") {
      out.kind = QRule::Kind::constant;
    } else {
      problem(key, "kind must be 'power' or 'constant'");
      return;
    }
    out.value = v["value"].get<double>();
    if (!(out.value > 0.0)) problem(key, "value must be positive");
  }

  void law(const char* key, EntryLaw& out) {
    used_.insert(key);
    if (!has(key)) return;
    const json& v = j_.at(key);
    try {
      if (v.is_string()) {
        out.kind = parse_entry_kind(v.get<std::string>());
      } else if (v.is_object() && v.contains("kind") && v["kind"].is_string()) {
        out.kind = parse_entry_kind(v["kind"].get<std::string>());
        if (v.contains("subgaussian_param")) {
          if (!v["subgaussian_param"].is_number()) throw std::invalid_argument("subgaussian_param must be a number");
          out.subgaussian_param = v["subgaussian_param"].get<double>();
        }
        for (const auto& [k, _] : v.items()) {
          if (k != "kind" && k != "subgaussian_param") throw std::invalid_argument("unknown key '" + k + "'");
        }
      } else {
        throw std::invalid_argument(R"(must be a law name or {"kind": name, "subgaussian_param": number})");
      }
    } catch (const std::exception& e) {
      problem(key, e.what());
    }
  }

  void model(const char* key, Model& out) {
    std::string name;
    if (!get(key, name)) return;
    try {
      out = parse_model(name);
    } catch (const std::exception& e) {
      problem(key, e.what());
    }
  }

  void seed(const CommandOptions& options, std::uint64_t& out) {
    if (get("seed", out)) return;
    if (options.seed) {
      out = *options.seed;
    } else if (has("seed")) {
      return;
    } else {
      problem("seed", "a master seed is required (config key or --seed)");
    }
  }

  void dense_cap(const CommandOptions& options, std::size_t& out) {
    if (!get("dense_cap", out) && options.dense_cap) out = *options.dense_cap;
  }

  void batch(std::size_t& out) {
    if (get("batch_size", out) && out == 0) problem("batch_size", "must be at least 1");
  }

  const json* sub(const char* key) {
    used_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, _] : j_.items()) {
      if (!used_.count(k)) problem(k, "unknown key");
    }
  }

  void problem(const std::string& key, const std::string& what) {
    const std::string full = prefix_.empty() ? key : key.empty() ? prefix_ : prefix_ + "." + key;
    problems_.push_back((full.empty() ? std::string("config") : full) + ": " + what);
  }

 private:
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& problems_;
  std::set<std::string, std::less<>> used_;
};

void add_prefixed(std::vector<std::string>& out, const std::vector<std::string>& in, const std::string& prefix) {
  for (const std::string& p : in) out.push_back(prefix.empty() ? p : prefix + "." + p);
}

void throw_if(std::vector<std::string> problems) {
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

SweepJob read_sweep(const json& config, const CommandOptions& options, Model default_model, const std::string& prefix,
                    std::vector<std::string>& problems) {
  SweepJob job;
  job.sweep.model = default_model;
  Reader r(config, prefix, problems);
  r.get("ns", job.sweep.ns);
  r.q_rule("q_rule", job.sweep.q_rule);
  r.get("alphas", job.sweep.alphas);
  r.get("ks", job.sweep.ks);
  r.get("include_zero", job.sweep.include_zero);
  r.get("trials", job.sweep.trials);
  r.seed(options, job.sweep.master_seed);
  r.model("model", job.sweep.model);
  r.law("law", job.sweep.law);
  r.get("eigen_index", job.sweep.eigen_index);
  r.dense_cap(options, job.sweep.policy.dense_cap);
  r.get("exponents", job.exponents);
  r.get("index_scaled", job.index_scaled);
  r.batch(job.batch_size);
  r.finish();
  add_prefixed(problems, job.sweep.problems(), prefix);
  return job;
}

EdgeJob read_edge(const json& config, const CommandOptions& options, std::size_t min_sizes, Model default_model,
                  const std::string& prefix, std::vector<std::string>& problems) {
  EdgeJob job;
  job.edge.model = default_model;
  Reader r(config, prefix, problems);
  r.get("ns", job.edge.ns);
  r.q_rule("q_rule", job.edge.q_rule);
  r.get("trials", job.edge.trials);
  r.seed(options, job.edge.master_seed);
  r.model("model", job.edge.model);
  r.law("law", job.edge.law);
  r.get("deltas", job.edge.deltas);
  r.dense_cap(options, job.edge.policy.dense_cap);
  r.batch(job.batch_size);
  r.finish();
  add_prefixed(problems, job.edge.problems(min_sizes), prefix);
  return job;
}

std::string csv_header_note(const std::string& text) { return "# " + text + "\n"; }

std::uint64_t bootstrap_seed(std::uint64_t master) { return Stream(master).split(static_cast<std::uint64_t>(Role::bootstrap)).key(); }

template <class Rec>
std::vector<json> to_rows(const std::vector<Rec>& recs) {
  std::vector<json> rows;
  rows.reserve(recs.size());
  for (const Rec& r : recs) rows.push_back(r.to_json());
  return rows;
}

template <class Rec>
std::vector<Rec> from_rows(const std::vector<json>& rows) {
  std::vector<Rec> out;
  out.reserve(rows.size());
  for (const json& j : rows) out.push_back(Rec::from_json(j));
  return out;
}

CommandResult result_of(const RunOutcome& o) {
  CommandResult r;
  r.complete = o.complete;
  r.computed = o.computed;
  r.skipped = o.skipped;
  r.pending = o.pending;
  return r;
}

void merge(CommandResult& into, const CommandResult& part) {
  into.complete = into.complete && part.complete;
  into.computed += part.computed;
  into.skipped += part.skipped;
  into.pending += part.pending;
  into.outputs.insert(into.outputs.end(), part.outputs.begin(), part.outputs.end());
}

CommandResult run_edge_command(const EdgeJob& job, const RunOptions& options, const std::string& name,
                               bool variance) {
  Run run(options, name, canonical(job), job.edge.master_seed);
  std::vector<Batch> batches;
  for (const std::size_t n : job.edge.ns) {
    for (const auto& [lo, hi] : trial_chunks(job.edge.trials, job.batch_size)) {
      batches.push_back({batch_key(n, lo, hi), [&job, &name, n, lo = lo, hi = hi] {
                           return to_rows(run_edge_batch(job.edge, n, lo, hi, name));
                         }});
    }
  }
  const RunOutcome o = run.execute(batches);
  CommandResult res = result_of(o);
  if (!o.complete) return res;
  const auto recs = from_rows<EdgeRecord>(o.rows);
  res.outputs.push_back(run.write_records(name + "_records.jsonl", o.rows));
  const std::uint64_t bs = bootstrap_seed(job.edge.master_seed);
  if (variance) {
    res.outputs.push_back(run.write_output("variance.csv", variance_csv(variance_scan(recs, bs), run.header())));
  } else {
    res.outputs.push_back(
        run.write_output("gaps.csv", gap_csv(gap_report(recs, job.edge.deltas, bs), run.header())));
  }
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

SweepJob parse_sweep_job(const json& config, const CommandOptions& options, Model default_model) {
  std::vector<std::string> problems;
  SweepJob job = read_sweep(config, options, default_model, "", problems);
  throw_if(std::move(problems));
  return job;
}

EdgeJob parse_edge_job(const json& config, const CommandOptions& options, std::size_t min_sizes,
                       Model default_model) {
  std::vector<std::string> problems;
  EdgeJob job = read_edge(config, options, min_sizes, default_model, "", problems);
  throw_if(std::move(problems));
  return job;
}

ErJob parse_er_job(const json& config, const CommandOptions& options) {
  std::vector<std::string> problems;
  ErJob job;
  Reader r(config, "", problems);
  std::uint64_t shared_seed = 0;
  CommandOptions inner = options;
  if (r.get("seed", shared_seed)) inner.seed = shared_seed;
  if (const json* s = r.sub("sweep")) {
    job.sweep = read_sweep(*s, inner, Model::er_adjacency, "sweep", problems);
    if (job.sweep->sweep.model == Model::centered_sparse) {
      problems.emplace_back("sweep.model: Erdos-Renyi runs use er-adjacency or er-centered");
    }
  }
  if (const json* s = r.sub("sticking")) {
    job.sticking = read_edge(*s, inner, 1, Model::er_adjacency, "sticking", problems);
    if (job.sticking->edge.model == Model::centered_sparse) {
      problems.emplace_back("sticking.model: Erdos-Renyi runs use er-adjacency or er-centered");
    }
  }
  r.finish();
  if (!job.sweep && !job.sticking) problems.emplace_back("config: needs a 'sweep' and/or 'sticking' section");
  throw_if(std::move(problems));
  return job;
}

DriftJob parse_drift_job(const json& config, const CommandOptions& options) {
  std::vector<std::string> problems;
  DriftJob job;
  Reader r(config, "", problems);
  r.get("n", job.drift.n);
  r.q_rule("q_rule", job.drift.q_rule);
  r.get("alpha", job.drift.alpha);
  r.get("trials", job.drift.trials);
  r.seed(options, job.drift.master_seed);
  r.law("law", job.drift.law);
  r.get("delta", job.drift.delta);
  r.get("points", job.drift.points);
  r.dense_cap(options, job.drift.dense_cap);
  r.batch(job.batch_size);
  r.finish();
  add_prefixed(problems, job.drift.problems(), "");
  throw_if(std::move(problems));
  return job;
}

ChatterjeeJob parse_chatterjee_job(const json& config, const CommandOptions& options) {
  std::vector<std::string> problems;
  ChatterjeeJob job;
  Reader r(config, "", problems);
  r.get("n", job.chatterjee.n);
  r.q_rule("q_rule", job.chatterjee.q_rule);
  r.get("ks", job.chatterjee.ks);
  r.get("trials", job.chatterjee.trials);
  r.seed(options, job.chatterjee.master_seed);
  r.law("law", job.chatterjee.law);
  r.batch(job.batch_size);
  r.finish();
  add_prefixed(problems, job.chatterjee.problems(), "");
  throw_if(std::move(problems));
  return job;
}

CollapseJob parse_collapse_job(const json& config) {
  std::vector<std::string> problems;
  CollapseJob job;
  Reader r(config, "", problems);
  std::string input;
  if (!r.get("input", input)) problems.emplace_back("input: path of a sweep record file is required");
  job.input = input;
  r.get("exponents", job.exponents);
  r.get("index_scaled", job.index_scaled);
  r.finish();
  if (job.exponents.empty()) problems.emplace_back("exponents: at least one exponent is required");
  if (!input.empty() && !fs::exists(job.input)) problems.push_back("input: no such file '" + input + "'");
  throw_if(std::move(problems));
  return job;
}

GenerateJob parse_generate_job(const json& config, const CommandOptions& options) {
  std::vector<std::string> problems;
  GenerateJob job;
  Reader r(config, "", problems);
  if (!r.get("n", job.spec.n)) problems.emplace_back("n: matrix size is required");
  if (!r.get("q", job.spec.q)) problems.emplace_back("q: sparsity parameter is required");
  r.model("model", job.spec.model);
  r.law("law", job.spec.law);
  r.seed(options, job.seed);
  std::string out;
  if (!r.get("output", out)) problems.emplace_back("output: output file path is required");
  job.output = out;
  r.finish();
  if (problems.empty()) {
    try {
      job.spec.validate();
    } catch (const std::exception& e) {
      problems.push_back(std::string("n/q: ") + e.what());
    }
  }
  throw_if(std::move(problems));
  return job;
}

// ---------------------------------------------------------------------------
// Canonical configs

json canonical(const SweepJob& job) {
  json j = job.sweep.to_json();
  j["exponents"] = job.exponents;
  j["index_scaled"] = job.index_scaled;
  j["batch_size"] = job.batch_size;
  return j;
}

json canonical(const EdgeJob& job) {
  json j = job.edge.to_json();
  j["batch_size"] = job.batch_size;
  return j;
}

json canonical(const ErJob& job) {
  json j = json::object();
  if (job.sweep) j["sweep"] = canonical(*job.sweep);
  if (job.sticking) j["sticking"] = canonical(*job.sticking);
  return j;
}

json canonical(const DriftJob& job) {
  json j = job.drift.to_json();
  j["batch_size"] = job.batch_size;
  return j;
}

json canonical(const ChatterjeeJob& job) {
  json j = job.chatterjee.to_json();
  j["batch_size"] = job.batch_size;
  return j;
}

// ---------------------------------------------------------------------------
// Drivers

std::vector<json> read_records(const fs::path& path) { return parse_jsonl(read_file(path)); }

CommandResult cmd_sweep(const SweepJob& job, const RunOptions& options, const std::string& name) {
  job.sweep.validate();
  Run run(options, name, canonical(job), job.sweep.master_seed);
  std::vector<Batch> batches;
  for (const std::size_t n : job.sweep.ns) {
    for (const auto& [lo, hi] : trial_chunks(job.sweep.trials, job.batch_size)) {
      batches.push_back({batch_key(n, lo, hi), [&job, &name, n, lo = lo, hi = hi] {
                           return to_rows(run_sweep_batch(job.sweep, n, lo, hi, name));
                         }});
    }
  }
  const RunOutcome o = run.execute(batches);
  CommandResult res = result_of(o);
  if (!o.complete) return res;
  const auto recs = from_rows<TrialRecord>(o.rows);
  const auto summary = summarize_sweep(recs);
  res.outputs.push_back(run.write_records(name + "_records.jsonl", o.rows));
  res.outputs.push_back(run.write_output(name + "_summary.csv", summary_csv(summary, run.header())));
  try {
    const auto curves = curves_from_summary(summary, job.index_scaled);
    const auto reports = scaling_collapse(curves, job.exponents);
    res.outputs.push_back(run.write_output(name + "_collapse.csv", collapse_csv(reports, run.header())));
  } catch (const CollapseError& e) {
    std::string text;
    for (const std::string& h : run.header()) text += csv_header_note(h);
    text += csv_header_note(std::string("collapse unavailable: ") + e.what());
    res.outputs.push_back(run.write_output(name + "_collapse.csv", text));
  }
  if (job.sweep.include_zero) {
    res.outputs.push_back(run.write_output(name + "_hmain.csv", hmain_csv(hmain1_check(recs), run.header())));
  }
  return res;
}

CommandResult cmd_variance(const EdgeJob& job, const RunOptions& run) {
  job.edge.validate(4);
  return run_edge_command(job, run, "variance", true);
}

CommandResult cmd_gaps(const EdgeJob& job, const RunOptions& run) {
  job.edge.validate(2);
  return run_edge_command(job, run, "gaps", false);
}

CommandResult cmd_er(const ErJob& job, const RunOptions& options) {
  CommandResult res;
  res.complete = true;
  if (job.sweep) merge(res, cmd_sweep(*job.sweep, options, "er"));
  if (job.sticking) {
    const EdgeJob& st = *job.sticking;
    st.edge.validate();
    Run run(options, "sticking", canonical(st), st.edge.master_seed);
    std::vector<Batch> batches;
    for (const std::size_t n : st.edge.ns) {
      for (const auto& [lo, hi] : trial_chunks(st.edge.trials, st.batch_size)) {
        batches.push_back({batch_key(n, lo, hi), [&st, n, lo = lo, hi = hi] {
                             return to_rows(run_sticking_batch(st.edge, n, lo, hi));
                           }});
      }
    }
    const RunOutcome o = run.execute(batches);
    CommandResult part = result_of(o);
    if (o.complete) {
      const auto recs = from_rows<StickingRecord>(o.rows);
      part.outputs.push_back(run.write_records("sticking_records.jsonl", o.rows));
      part.outputs.push_back(run.write_output(
          "sticking.csv", sticking_csv(sticking_report(recs, bootstrap_seed(st.edge.master_seed)), run.header())));
    }
    merge(res, part);
  }
  return res;
}

CommandResult cmd_resolvent(const DriftJob& job, const RunOptions& options) {
  job.drift.validate();
  Run run(options, "resolvent", canonical(job), job.drift.master_seed);
  std::vector<Batch> batches;
  for (const auto& [lo, hi] : trial_chunks(job.drift.trials, job.batch_size)) {
    batches.push_back({batch_key(job.drift.n, lo, hi),
                       [&job, lo = lo, hi = hi] { return to_rows(run_drift_batch(job.drift, lo, hi)); }});
  }
  const RunOutcome o = run.execute(batches);
  CommandResult res = result_of(o);
  if (!o.complete) return res;
  const auto recs = from_rows<DriftRecord>(o.rows);
  res.outputs.push_back(run.write_records("resolvent_records.jsonl", o.rows));
  res.outputs.push_back(run.write_output("resolvent.csv", drift_csv(recs, run.header())));
  return res;
}

CommandResult cmd_chatterjee(const ChatterjeeJob& job, const RunOptions& options) {
  job.chatterjee.validate();
  Run run(options, "chatterjee", canonical(job), job.chatterjee.master_seed);
  std::vector<Batch> batches;
  for (const auto& [lo, hi] : trial_chunks(job.chatterjee.trials, job.batch_size)) {
    batches.push_back({batch_key(job.chatterjee.n, lo, hi),
                       [&job, lo = lo, hi = hi] { return to_rows(run_chatterjee_batch(job.chatterjee, lo, hi)); }});
  }
  const RunOutcome o = run.execute(batches);
  CommandResult res = result_of(o);
  if (!o.complete) return res;
  const auto recs = from_rows<ChatterjeeRecord>(o.rows);
  res.outputs.push_back(run.write_records("chatterjee_records.jsonl", o.rows));
  res.outputs.push_back(run.write_output("chatterjee.csv", chatterjee_csv(chatterjee_estimates(recs), run.header())));
  return res;
}

CommandResult cmd_collapse(const CollapseJob& job, const RunOptions& options) {
  const std::string text = read_file(job.input);
  json config{{"input", job.input.generic_string()},
              {"input_hash", hex64(config_hash(json(text)))},
              {"exponents", job.exponents},
              {"index_scaled", job.index_scaled}};
  std::vector<TrialRecord> recs;
  for (const json& row : parse_jsonl(text)) recs.push_back(TrialRecord::from_json(row));
  Run run(options, "collapse", config, recs.empty() ? 0 : recs.front().seed);
  const auto curves = curves_from_summary(summarize_sweep(recs), job.index_scaled);
  const auto reports = scaling_collapse(curves, job.exponents);
  CommandResult res;
  res.complete = true;
  res.outputs.push_back(run.write_output("collapse.csv", collapse_csv(reports, run.header())));
  return res;
}

fs::path cmd_generate(const GenerateJob& job) {
  job.spec.validate();
  Stream rng = Stream::derive(job.seed, job.spec.n, 0, Role::base);
  const SparseSymMatrix h = sample(job.spec, rng);
  std::ostringstream os;
  write_matrix(os, MatrixHeader{job.spec.n, job.spec.q, job.spec.model, job.seed}, h);
  write_atomic(job.output, os.str());
  return job.output;
}

}  // namespace rmt
