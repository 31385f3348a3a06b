#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gessa::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws if absent.
  int column(const std::string& name) const;
};

std::vector<std::string> split_line(const std::string& line);
Table read(const std::filesystem::path& path);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
/// Empty string for missing values.
std::string format_optional(const std::optional<double>& v);

std::optional<double> parse_optional(const std::string& field);
double parse_double(const std::string& field);
int parse_int(const std::string& field);

std::string join(const std::vector<std::string>& fields);

}  // namespace gessa::csv
