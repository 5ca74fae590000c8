#pragma once

#include "rmt/chatterjee.hpp"
#include "rmt/experiments.hpp"
#include "rmt/runner.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rmt {

/// Flag-level defaults; keys present in the config file win.
struct CommandOptions {
  RunOptions run;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dense_cap;
};

struct CommandResult {
  bool complete = false;
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t pending = 0;
  std::vector<std::filesystem::path> outputs;
};

// Parsers collect every problem (unknown keys, wrong types, invalid values)
// and throw ConfigError listing all of them.

struct SweepJob {
  SweepConfig sweep;
  std::vector<double> exponents{1.5, 5.0 / 3.0, 11.0 / 6.0};
  bool index_scaled = false;
  std::size_t batch_size = 10;
};

struct EdgeJob {
  EdgeConfig edge;
  std::size_t batch_size = 25;
};

struct ErJob {
  std::optional<SweepJob> sweep;
  std::optional<EdgeJob> sticking;
};

struct DriftJob {
  DriftConfig drift;
  std::size_t batch_size = 5;
};

struct ChatterjeeJob {
  ChatterjeeConfig chatterjee;
  std::size_t batch_size = 100;
};

struct CollapseJob {
  std::filesystem::path input;
  std::vector<double> exponents{1.5, 5.0 / 3.0, 11.0 / 6.0};
  bool index_scaled = false;
};

struct GenerateJob {
  EnsembleSpec spec;
  std::uint64_t seed = 0;
  std::filesystem::path output;
};

SweepJob parse_sweep_job(const json& config, const CommandOptions& options, Model default_model = Model::centered_sparse);
EdgeJob parse_edge_job(const json& config, const CommandOptions& options, std::size_t min_sizes,
                       Model default_model = Model::centered_sparse);
ErJob parse_er_job(const json& config, const CommandOptions& options);
DriftJob parse_drift_job(const json& config, const CommandOptions& options);
ChatterjeeJob parse_chatterjee_job(const json& config, const CommandOptions& options);
CollapseJob parse_collapse_job(const json& config);
GenerateJob parse_generate_job(const json& config, const CommandOptions& options);

/// Canonical config (every field, defaults filled in) used for hashing.
json canonical(const SweepJob& job);
json canonical(const EdgeJob& job);
json canonical(const ErJob& job);
json canonical(const DriftJob& job);
json canonical(const ChatterjeeJob& job);

CommandResult cmd_sweep(const SweepJob& job, const RunOptions& run, const std::string& name = "sweep");
CommandResult cmd_variance(const EdgeJob& job, const RunOptions& run);
CommandResult cmd_gaps(const EdgeJob& job, const RunOptions& run);
CommandResult cmd_er(const ErJob& job, const RunOptions& run);
CommandResult cmd_resolvent(const DriftJob& job, const RunOptions& run);
CommandResult cmd_chatterjee(const ChatterjeeJob& job, const RunOptions& run);
CommandResult cmd_collapse(const CollapseJob& job, const RunOptions& run);
std::filesystem::path cmd_generate(const GenerateJob& job);

/// Reads a JSON-lines record file (header rows skipped).
std::vector<json> read_records(const std::filesystem::path& path);

}  // namespace rmt
