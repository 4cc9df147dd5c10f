#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peakload {

using Timestamp = std::chrono::sys_seconds;

namespace csv {

/// Parses ISO-8601 `YYYY-MM-DD[T ]hh:mm[:ss[.fff]]` followed by `Z` or a
/// `+hh:mm` / `-hhmm` offset. Returns nullopt on anything else.
std::optional<Timestamp> parse_timestamp(std::string_view text);
/// `YYYY-MM-DDThh:mm:ssZ`.
std::string format_timestamp(Timestamp t);

std::optional<double> parse_double(std::string_view text);
/// Shortest representation that round-trips; NaN is written as an empty field.
std::string format_double(double value);

std::vector<std::string_view> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view text);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line numbers in the source, for diagnostics.
  std::vector<std::size_t> line_numbers;

  std::optional<std::size_t> column(std::string_view name) const;
};

/// Reads a comma-separated file with a mandatory header. Blank lines and
/// lines starting with '#' are skipped.
Table read_table(const std::string& path, std::string_view where);
Table parse_table(std::string_view content, std::string_view where);

/// Writes `content` to a temp file next to `path` and renames it into place.
void write_atomic(const std::string& path, std::string_view content);

/// `# key=value` provenance line (newline-terminated).
std::string provenance_line(std::uint64_t seed, std::string_view config_hash);

/// FNV-1a 64 of a string, hex encoded.
std::string hash_hex(std::string_view text);

}  // namespace csv
}  // namespace peakload
