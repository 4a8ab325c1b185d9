#include "fadacs/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fadacs::csv {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<std::size_t> table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == name) return i;
  return std::nullopt;
}

std::size_t table::require_column(const std::string& name) const {
  auto idx = column(name);
  if (!idx) throw error("MissingColumn", name);
  return *idx;
}

table parse_string(const std::string& text) {
  table out;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool header_done = false;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    if (!header_done) {
      out.header = row;
      header_done = true;
    } else {
      out.rows.push_back(row);
    }
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
    } else {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    end_row();
  }
  // drop fully empty trailing rows
  while (!out.rows.empty() && out.rows.back().size() == 1 && out.rows.back()[0].empty())
    out.rows.pop_back();
  return out;
}

table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("InputMissing", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

std::string escape_field(const std::string& f) {
  if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("OutputUnwritable", "cannot write " + path);
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << escape_field(cells[i]);
    }
    out << '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) return std::nullopt;
  return v;
}

}  // namespace fadacs::csv
