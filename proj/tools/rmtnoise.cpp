// rmtnoise: drivers for the noise-sensitivity experiments.
//
// Exit codes: 0 all requested batches complete, 1 runtime failure,
// 2 invalid flags or configuration, 3 partial run (resume with --resume).

#include "rmt/commands.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

namespace {

namespace fs = std::filesystem;
using rmt::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out;
  std::optional<std::size_t> dense_cap;
  bool resume = false;
  std::optional<std::size_t> max_batches;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* cfg = app->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) cfg->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed (the config's 'seed' wins)");
  app->add_option("--workers", c.workers, "worker threads (default: logical cores)")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory (default: $RMT_NOISE_OUT, else ./rmt_out)");
  app->add_option("--dense-cap", c.dense_cap, "largest N handled by dense LAPACK");
  app->add_flag("--resume", c.resume, "skip batches the manifest marks complete");
  app->add_option("--max-batches", c.max_batches, "stop after this many new batches");
}

rmt::CommandOptions options_of(const Common& c) {
  rmt::CommandOptions o;
  std::string out = c.out;
  if (out.empty()) {
    const char* env = std::getenv("RMT_NOISE_OUT");
    out = env && *env ? env : "rmt_out";
  }
  o.run.out = out;
  o.run.resume = c.resume;
  o.run.max_batches = c.max_batches;
  o.seed = c.seed;
  o.dense_cap = c.dense_cap;
  return o;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(rmt::read_file(path));
  } catch (const json::parse_error& e) {
    throw rmt::ConfigError({std::string("config: cannot parse ") + path + ": " + e.what()});
  }
}

int report(const rmt::CommandResult& r) {
  std::cout << "batches: computed " << r.computed << ", skipped " << r.skipped << ", pending " << r.pending << '\n';
  for (const auto& p : r.outputs) std::cout << "wrote " << p.string() << '\n';
  if (!r.complete) {
    std::cout << "partial run: rerun with --resume to finish\n";
    return 3;
  }
  return 0;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const rmt::ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise sensitivity experiments for sparse random matrices"};
  app.set_version_flag("--version", std::string(rmt::kArtifactVersion));
  app.require_subcommand(1);

  // generate
  Common gen_common;
  std::optional<std::size_t> gen_n;
  std::optional<double> gen_q;
  std::string gen_model = "centered-sparse";
  std::string gen_law = "rademacher";
  std::string gen_output;
  auto* gen = app.add_subcommand("generate", "sample one matrix and write it in the text format");
  gen->add_option("--config", gen_common.config, "config with keys n, q, model, law, seed, output")
      ->check(CLI::ExistingFile);
  gen->add_option("--n", gen_n, "matrix size N");
  gen->add_option("--q", gen_q, "sparsity parameter q");
  gen->add_option("--model", gen_model, "centered-sparse | er-adjacency | er-centered");
  gen->add_option("--law", gen_law, "rademacher | gaussian | uniform-symmetric");
  gen->add_option("--seed", gen_common.seed, "master seed");
  gen->add_option("--output", gen_output, "matrix file to write");

  struct Sub {
    const char* name;
    const char* help;
    Common common;
  };
  Sub subs[] = {
      {"sweep", "overlap sweeps over k (sensitivity / stability)", {}},
      {"variance", "variance scan of lambda_1 - chi", {}},
      {"gaps", "top gap statistics", {}},
      {"resolvent", "resolvent drift under resampling", {}},
      {"er", "Erdos-Renyi overlap sweeps and eigenvalue sticking", {}},
      {"collapse", "scaling collapse of a sweep record file", {}},
      {"chatterjee", "Monte Carlo I_k against the variance bound", {}},
  };
  std::vector<CLI::App*> apps;
  for (Sub& s : subs) {
    auto* a = app.add_subcommand(s.name, s.help);
    add_common(a, s.common, true);
    apps.push_back(a);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    return guarded([&] {
      json cfg = json::object();
      if (gen_n) cfg["n"] = *gen_n;
      if (gen_q) cfg["q"] = *gen_q;
      cfg["model"] = gen_model;
      cfg["law"] = gen_law;
      if (!gen_output.empty()) cfg["output"] = gen_output;
      // The config file overrides flags.
      cfg.update(load_config(gen_common.config));
      const auto path = rmt::cmd_generate(rmt::parse_generate_job(cfg, options_of(gen_common)));
      std::cout << "wrote " << path.string() << '\n';
      return 0;
    });
  }

  for (std::size_t i = 0; i < apps.size(); ++i) {
    if (!apps[i]->parsed()) continue;
    const Common& c = subs[i].common;
    const std::string name = subs[i].name;
    return guarded([&] {
      const json cfg = load_config(c.config);
      const rmt::CommandOptions o = options_of(c);
      rmt::configure_threads(c.workers > 0 ? c.workers : omp_get_num_procs());
      if (name == "sweep") return report(rmt::cmd_sweep(rmt::parse_sweep_job(cfg, o), o.run));
      if (name == "variance") return report(rmt::cmd_variance(rmt::parse_edge_job(cfg, o, 4), o.run));
      if (name == "gaps") return report(rmt::cmd_gaps(rmt::parse_edge_job(cfg, o, 2), o.run));
      if (name == "resolvent") return report(rmt::cmd_resolvent(rmt::parse_drift_job(cfg, o), o.run));
      if (name == "er") return report(rmt::cmd_er(rmt::parse_er_job(cfg, o), o.run));
      if (name == "collapse") return report(rmt::cmd_collapse(rmt::parse_collapse_job(cfg), o.run));
      return report(rmt::cmd_chatterjee(rmt::parse_chatterjee_job(cfg, o), o.run));
    });
  }
  return 2;
}
