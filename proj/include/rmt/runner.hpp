#pragma once

#include "rmt/records.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmt {

struct RunOptions {
  std::filesystem::path out = ".";
  /// Skip batches the manifest marks complete.
  bool resume = false;
  /// Stop after computing this many new batches.
  std::optional<std::size_t> max_batches;
};

class ResumeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A unit of work: trials [lo, hi) at one size. `run` returns the JSON rows.
struct Batch {
  std::string key;
  std::function<std::vector<json>()> run;
};

struct RunOutcome {
  bool complete = false;
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t pending = 0;
  std::vector<json> rows;  // every row, in batch order, when complete
};

/// manifest.json in the output directory: per command, the config hash,
/// master seed, artifact version, output paths and the completed batches
/// with their shard files. Shards are written atomically before the batch
/// is marked complete, so an interrupted run loses at most the batch in
/// flight.
class Run {
 public:
  Run(RunOptions options, std::string command, json config, std::uint64_t master_seed);

  [[nodiscard]] const std::filesystem::path& out() const noexcept { return options_.out; }
  [[nodiscard]] std::vector<std::string> header() const { return header_lines(config_); }
  [[nodiscard]] const json& config() const noexcept { return config_; }

  RunOutcome execute(const std::vector<Batch>& batches);

  /// Writes out()/name atomically and lists it in the manifest.
  std::filesystem::path write_output(const std::string& name, const std::string& content);
  /// JSON-lines file: header record, then the rows.
  std::filesystem::path write_records(const std::string& name, const std::vector<json>& rows);

 private:
  [[nodiscard]] std::filesystem::path manifest_path() const { return options_.out / "manifest.json"; }
  [[nodiscard]] std::filesystem::path shard_path(const std::string& key) const;
  void save();

  RunOptions options_;
  std::string command_;
  json config_;
  json manifest_;
};

/// Rows of `name` split by batch keys "n=<N>/trials=<lo>-<hi>".
std::string batch_key(std::size_t n, std::uint64_t lo, std::uint64_t hi);

/// [lo, hi) chunks of `trials` of width `batch`.
std::vector<std::pair<std::uint64_t, std::uint64_t>> trial_chunks(std::size_t trials, std::size_t batch);

}  // namespace rmt
