#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fadacs/common.hpp"

namespace fadacs::csv {

// Comma-delimited, UTF-8, RFC-4180-style quoting, header row required.
struct table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // column index or nullopt; lookup is exact after trimming the header cell
  std::optional<std::size_t> column(const std::string& name) const;
  // throws error("MissingColumn", name) when absent
  std::size_t require_column(const std::string& name) const;
};

table parse_string(const std::string& text);
table read_file(const std::string& path);  // throws "InputMissing" when unreadable

std::string escape_field(const std::string& field);
void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

// Locale-independent numeric formatting (shortest round-trip).
std::string format_double(double v);
std::optional<double> parse_double(const std::string& s);
std::optional<std::int64_t> parse_int(const std::string& s);

std::string trim(const std::string& s);

}  // namespace fadacs::csv
