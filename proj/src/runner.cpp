#include "rmt/runner.hpp"

#include <algorithm>

namespace rmt {

namespace fs = std::filesystem;

std::string batch_key(std::size_t n, std::uint64_t lo, std::uint64_t hi) {
  return "n=" + std::to_string(n) + "/trials=" + std::to_string(lo) + "-" + std::to_string(hi);
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> trial_chunks(std::size_t trials, std::size_t batch) {
  if (batch == 0) batch = trials;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  for (std::uint64_t lo = 0; lo < trials; lo += batch) out.emplace_back(lo, std::min<std::uint64_t>(trials, lo + batch));
  return out;
}

Run::Run(RunOptions options, std::string command, json config, std::uint64_t master_seed)
    : options_(std::move(options)), command_(std::move(command)), config_(std::move(config)) {
  fs::create_directories(options_.out);
  if (fs::exists(manifest_path())) {
    try {
      manifest_ = json::parse(read_file(manifest_path()));
    } catch (const json::parse_error& e) {
      throw ResumeError("unreadable manifest " + manifest_path().string() + ": " + e.what());
    }
  } else {
    manifest_ = json::object();
  }
  const std::string hash = hex64(config_hash(config_));
  json& entry = manifest_["commands"][command_];
  if (options_.resume && entry.contains("config_hash") && entry["config_hash"] != hash) {
    throw ResumeError("cannot resume '" + command_ + "': the manifest was written for config " +
                      entry["config_hash"].get<std::string>() + ", this config hashes to " + hash);
  }
  if (!options_.resume) entry = json::object();
  entry["config_hash"] = hash;
  entry["master_seed"] = master_seed;
  entry["version"] = std::string(kArtifactVersion);
  if (!entry.contains("completed")) entry["completed"] = json::object();
  if (!entry.contains("outputs")) entry["outputs"] = json::array();
  save();
}

fs::path Run::shard_path(const std::string& key) const {
  std::string name = key;
  std::replace(name.begin(), name.end(), '/', '_');
  std::replace(name.begin(), name.end(), '=', '-');
  return options_.out / "shards" / command_ / (name + ".jsonl");
}

void Run::save() { write_atomic(manifest_path(), manifest_.dump(2) + "\n"); }

RunOutcome Run::execute(const std::vector<Batch>& batches) {
  RunOutcome outcome;
  json& completed = manifest_["commands"][command_]["completed"];
  std::vector<fs::path> shards;
  for (const Batch& b : batches) {
    const fs::path shard = shard_path(b.key);
    shards.push_back(shard);
    if (completed.contains(b.key) && fs::exists(shard)) {
      ++outcome.skipped;
      continue;
    }
    if (options_.max_batches && outcome.computed >= *options_.max_batches) {
      ++outcome.pending;
      continue;
    }
    std::vector<json> rows{header_record(config_)};
    for (json& row : b.run()) rows.push_back(std::move(row));
    write_atomic(shard, to_jsonl(rows));
    completed[b.key] = fs::relative(shard, options_.out).generic_string();
    save();
    ++outcome.computed;
  }
  outcome.complete = outcome.pending == 0;
  if (outcome.complete) {
    for (const fs::path& shard : shards) {
      for (json& row : parse_jsonl(read_file(shard))) outcome.rows.push_back(std::move(row));
    }
  }
  return outcome;
}

fs::path Run::write_output(const std::string& name, const std::string& content) {
  const fs::path path = options_.out / name;
  // Unchanged bytes are left alone so a repeated run touches nothing.
  if (!fs::exists(path) || read_file(path) != content) write_atomic(path, content);
  json& outputs = manifest_["commands"][command_]["outputs"];
  if (std::find(outputs.begin(), outputs.end(), json(name)) == outputs.end()) {
    outputs.push_back(name);
    save();
  }
  return path;
}

fs::path Run::write_records(const std::string& name, const std::vector<json>& rows) {
  std::vector<json> all{header_record(config_)};
  all.insert(all.end(), rows.begin(), rows.end());
  return write_output(name, to_jsonl(all));
}

}  // namespace rmt
