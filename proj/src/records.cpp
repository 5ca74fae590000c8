#include "rmt/records.hpp"

#include "rmt/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rmt {

std::uint64_t config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::vector<std::string> header_lines(const json& config) {
  return {"config_hash=" + hex64(config_hash(config)), "version=" + std::string(kArtifactVersion)};
}

json header_record(const json& config) {
  return json{{"type", "header"}, {"config_hash", hex64(config_hash(config))}, {"version", kArtifactVersion}};
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void put_number(json& j, const char* key, double value) {
  if (std::isfinite(value)) {
    j[key] = value;
  } else {
    j[key] = nullptr;
  }
}

double get_number(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nan("");
  return it->get<double>();
}

std::optional<double> get_optional(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::vector<json> parse_jsonl(std::string_view text) {
  std::vector<json> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("malformed record on line " + std::to_string(line_no) + ": " + e.what());
    }
    if (row.value("type", "") == "header") continue;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const json& row : rows) {
    out += row.dump();
    out += '\n';
  }
  return out;
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) throw std::invalid_argument("CsvTable: row width mismatch");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::render(const std::vector<std::string>& header) const {
  std::string out;
  for (const std::string& line : header) out += "# " + line + "\n";
  for (std::size_t c = 0; c < columns_.size(); ++c) out += (c ? "," : "") + columns_[c];
  out += '\n';
  for (const auto& row : rows_) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
    out += '\n';
  }
  return out;
}

std::string cell(double x) { return std::isfinite(x) ? format_double(x) : std::string("nan"); }
std::string cell(std::uint64_t x) { return std::to_string(x); }
std::string cell(std::optional<double> x) { return x ? cell(*x) : std::string(); }

}  // namespace rmt
