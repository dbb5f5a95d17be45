#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "netfactor/errors.hpp"

namespace netfactor::csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::vector<std::vector<std::string>> read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;
    rows.push_back(split_line(line));
  }
  if (rows.empty()) throw ValidationError("empty CSV file: " + path);
  return rows;
}

/// Parse a cell as double; empty cell means missing.
inline std::optional<double> parse_cell(const std::string& cell, const std::string& context) {
  std::string s = cell;
  // Trim surrounding whitespace.
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  size_t e = s.find_last_not_of(" \t");
  s = s.substr(b, e - b + 1);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ValidationError("non-numeric cell '" + cell + "' in " + context);
  return v;
}

/// Shortest round-trip representation of a double (deterministic across runs).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shorter %.15g / %.16g form when it round-trips exactly.
  for (int prec = 15; prec <= 16; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path) {
    if (!out_) throw ValidationError("cannot open file for writing: " + path);
  }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace netfactor::csv
