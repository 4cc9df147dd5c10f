#include "peakload/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "peakload/errors.hpp"
#include "peakload/version.hpp"

namespace peakload::csv {
namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

bool is_digits(std::string_view text) {
  if (text.empty()) return false;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  text = trim(text);
  if (text.size() < 16) return std::nullopt;
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
    return std::nullopt;
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!is_digits(text.substr(0, 4)) || !is_digits(text.substr(5, 2)) || !is_digits(text.substr(8, 2)) ||
      !is_digits(text.substr(11, 2)) || !is_digits(text.substr(14, 2))) {
    return std::nullopt;
  }
  parse_int(text.substr(0, 4), y);
  parse_int(text.substr(5, 2), mo);
  parse_int(text.substr(8, 2), d);
  parse_int(text.substr(11, 2), h);
  parse_int(text.substr(14, 2), mi);
  std::size_t pos = 16;
  if (pos < text.size() && text[pos] == ':') {
    if (!is_digits(text.substr(pos + 1, 2))) return std::nullopt;
    parse_int(text.substr(pos + 1, 2), s);
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      const std::size_t start = pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (text[pos] != '0') return std::nullopt;  // sub-second instants are off-grid anyway
        ++pos;
      }
      if (pos == start) return std::nullopt;
    }
  }
  if (pos >= text.size()) return std::nullopt;  // zone designator is mandatory
  int offset_minutes = 0;
  const std::string_view zone = text.substr(pos);
  if (zone == "Z" || zone == "z") {
    offset_minutes = 0;
  } else if (zone[0] == '+' || zone[0] == '-') {
    const int sign = zone[0] == '+' ? 1 : -1;
    std::string_view body = zone.substr(1);
    int oh = 0, om = 0;
    if (body.size() == 5 && body[2] == ':') {
      if (!is_digits(body.substr(0, 2)) || !is_digits(body.substr(3, 2))) return std::nullopt;
      parse_int(body.substr(0, 2), oh);
      parse_int(body.substr(3, 2), om);
    } else if (body.size() == 4 && is_digits(body)) {
      parse_int(body.substr(0, 2), oh);
      parse_int(body.substr(2, 2), om);
    } else if (body.size() == 2 && is_digits(body)) {
      parse_int(body, oh);
    } else {
      return std::nullopt;
    }
    if (oh > 23 || om > 59) return std::nullopt;
    offset_minutes = sign * (oh * 60 + om);
  } else {
    return std::nullopt;
  }
  if (h > 23 || mi > 59 || s > 60) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const sys_seconds local = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
  return local - minutes{offset_minutes};
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const sys_days day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf.data();
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_double(double value) {
  if (std::isnan(value)) return {};
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t' || text.front() == '\r' ||
                           text.front() == '"')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r' ||
                           text.back() == '"')) {
    text.remove_suffix(1);
  }
  return text;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

Table parse_table(std::string_view content, std::string_view where) {
  Table table;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
      line.remove_prefix(3);  // UTF-8 BOM
    }
    if (trim(line).empty() || trim(line).front() == '#') {
      if (end == content.size()) break;
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      for (auto f : fields) table.header.emplace_back(f);
      have_header = true;
    } else {
      std::vector<std::string> row;
      row.reserve(fields.size());
      for (auto f : fields) row.emplace_back(f);
      table.rows.push_back(std::move(row));
      table.line_numbers.push_back(line_no);
    }
    if (end == content.size()) break;
  }
  if (!have_header) fail(Errc::EmptyInput, std::string(where), "no header row");
  return table;
}

Table read_table(const std::string& path, std::string_view where) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, std::string(where), "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str(), where);
}

void write_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "io.write", "cannot open '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(Errc::Io, "io.write", "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fail(Errc::Io, "io.write", "rename to '" + path + "' failed: " + ec.message());
}

std::string provenance_line(std::uint64_t seed, std::string_view config_hash) {
  return "# tool=peakload version=" + std::string(kVersion) + " seed=" + std::to_string(seed) +
         " config_hash=" + std::string(config_hash) + "\n";
}

std::string hash_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(h));
  return buf.data();
}

}  // namespace peakload::csv
