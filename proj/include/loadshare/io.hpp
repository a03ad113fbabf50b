#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace loadshare::io {

/// Shortest round-trip decimal representation of a double. Deterministic:
/// the same value always yields the same bytes.
inline std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string format_int(long long v) {
  char buf[24];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

/// RFC-4180 field quoting; only quotes when required.
inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// Writes content to a temp file in the same directory and renames it into
/// place, so aborted runs never leave a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

/// Builds a CSV document (header + rows, "\n" line endings, UTF-8).
std::string build_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

}  // namespace loadshare::io
