#pragma once

#include <charconv>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace picsift::detail {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);
std::optional<unsigned long long> parse_uint(std::string_view s);

/// Whole file as a string; Error(io_error) on failure.
std::string read_text_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// `key = value` lines; blank lines and '#' comments ignored.
/// Throws Error(invalid_manifest) naming `origin` for malformed lines.
std::vector<KeyValue> parse_key_values(std::string_view text,
                                       const std::string& origin);

/// Lines split on tabs, skipping blanks and '#' comments. The second member
/// is the 1-based line number.
std::vector<std::pair<std::vector<std::string>, int>> parse_tsv(
    std::string_view text);

}  // namespace picsift::detail
