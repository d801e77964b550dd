#pragma once

// Small text I/O helpers shared by the file readers and writers: CSV line
// splitting, strict number parsing, and minute-resolution local timestamps.

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <fmt/core.h>

#include "stepwise/error.hpp"

namespace stepwise::io {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Splits one CSV record on commas and trims each field. Quoting is not
/// supported; none of the study files need it.
inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

/// Local calendar date-time at minute resolution.
struct Timestamp {
  std::chrono::sys_days day{};
  int minute_of_day = 0;  // [0, 1440)

  auto operator<=>(const Timestamp&) const = default;
};

inline std::optional<std::chrono::sys_days> parse_date(std::string_view s) {
  s = trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto y = parse_number<int>(s.substr(0, 4));
  const auto m = parse_number<unsigned>(s.substr(5, 2));
  const auto d = parse_number<unsigned>(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{*m},
                                        std::chrono::day{*d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

/// Accepts `YYYY-MM-DDTHH:MM[:SS]` (or a space instead of `T`). Seconds are
/// validated and then dropped.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  s = trim(s);
  if (s.size() != 16 && s.size() != 19) return std::nullopt;
  if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
  const auto day = parse_date(s.substr(0, 10));
  if (!day || s[13] != ':') return std::nullopt;
  const auto hh = parse_number<int>(s.substr(11, 2));
  const auto mm = parse_number<int>(s.substr(14, 2));
  if (!hh || !mm || *hh < 0 || *hh > 23 || *mm < 0 || *mm > 59) return std::nullopt;
  if (s.size() == 19) {
    const auto ss = parse_number<int>(s.substr(17, 2));
    if (s[16] != ':' || !ss || *ss < 0 || *ss > 59) return std::nullopt;
  }
  return Timestamp{*day, *hh * 60 + *mm};
}

inline std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

inline std::string format_timestamp(const Timestamp& t) {
  return fmt::format("{}T{:02d}:{:02d}", format_date(t.day), t.minute_of_day / 60,
                     t.minute_of_day % 60);
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Line-oriented CSV reader that tracks line numbers and checks the header.
class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, std::vector<std::string> expected_header)
      : path_(path.string()), in_(open_input(path)), width_(expected_header.size()) {
    std::string header;
    if (!std::getline(in_, header)) throw ParseError(path_, 1, "missing header row");
    ++line_no_;
    const auto fields = split_fields(header);
    bool ok = fields.size() == expected_header.size();
    for (std::size_t i = 0; ok && i < fields.size(); ++i) ok = fields[i] == expected_header[i];
    if (!ok) {
      std::string want;
      for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
      throw ParseError(path_, 1, fmt::format("expected header '{}'", want));
    }
  }

  /// Reads the next non-blank record into `fields`; false at end of file.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (trim(line_).empty()) continue;
      fields = split_fields(line_);
      if (fields.size() != width_)
        fail(fmt::format("expected {} fields, found {}", width_, fields.size()));
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  std::size_t line() const noexcept { return line_no_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t width_;
  std::string line_;
  std::size_t line_no_ = 0;
};

/// 64-bit FNV-1a, used for provenance hashes (stable across platforms).
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace stepwise::io
