#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace affect::text {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);
/// Fixed-point text with `digits` decimals.
std::string format_fixed(double v, int digits);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view line, char sep = ',');

std::string join(const std::vector<std::string>& fields, char sep = ',');

/// A parsed comma-separated file: the header row plus the data rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index for `name`; throws LoadError when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace affect::text
