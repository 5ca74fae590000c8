#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rmt {

using json = nlohmann::json;

inline constexpr std::string_view kArtifactVersion = RMT_VERSION;

/// FNV-1a 64 of the canonical (sorted-key, compact) dump of `config`.
std::uint64_t config_hash(const json& config);
std::string hex64(std::uint64_t x);

/// Comment lines every output file starts with.
std::vector<std::string> header_lines(const json& config);
/// First JSON-lines row of every record file.
json header_record(const json& config);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// JSON helpers that carry NaN as null.
void put_number(json& j, const char* key, double value);
double get_number(const json& j, const char* key);
std::optional<double> get_optional(const json& j, const char* key);

/// Parses a JSON-lines text, skipping header rows.
std::vector<json> parse_jsonl(std::string_view text);

/// One JSON object per line.
std::string to_jsonl(const std::vector<json>& rows);

/// Renders rows as CSV after "# " header lines; numbers use the shortest
/// round-trip form.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add_row(std::vector<std::string> cells);
  [[nodiscard]] std::string render(const std::vector<std::string>& header) const;
  [[nodiscard]] std::size_t rows() const noexcept { return rows_.size(); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

std::string cell(double x);
std::string cell(std::uint64_t x);
std::string cell(std::optional<double> x);

}  // namespace rmt
