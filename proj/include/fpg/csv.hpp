#ifndef FPG_CSV_HPP
#define FPG_CSV_HPP

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "fpg/errors.hpp"
#include "fpg/matops.hpp"

namespace fpg::csv {

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_real(const std::string& field, std::size_t line) {
  if (field.empty()) throw ParseError("empty numeric field", line);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || errno == ERANGE) {
    throw ParseError("not a number: '" + field + "'", line);
  }
  return v;
}

inline long parse_integer(const std::string& field, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(field.c_str(), &end, 10);
  if (field.empty() || end != field.c_str() + field.size() || errno == ERANGE) {
    throw ParseError("not an integer: '" + field + "'", line);
  }
  return v;
}

inline std::string join(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += real(v(i));
  }
  return out;
}

/// Row-major flattening of a matrix.
inline std::string join_row_major(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!out.empty()) out += ',';
      out += real(m(i, j));
    }
  }
  return out;
}

/// Reads a whole text file into lines; strips a trailing '\r'.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  auto out = open_for_write(path);
  out << m.rows() << ',' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << real(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Inverse of write_matrix: "rows,cols" header then one row per line.
inline Matrix read_matrix(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError("missing 'rows,cols' header", 1);
  const auto dims = split(lines[0]);
  if (dims.size() != 2) throw ParseError("expected 'rows,cols' header", 1);
  const long rows = parse_integer(dims[0], 1);
  const long cols = parse_integer(dims[1], 1);
  if (rows < 1 || cols < 1) throw ParseError("matrix dimensions must be positive", 1);
  if (static_cast<long>(lines.size()) < rows + 1) {
    throw ParseError("expected " + std::to_string(rows) + " rows", lines.size());
  }
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    const std::size_t lineno = static_cast<std::size_t>(i) + 2;
    const auto fields = split(lines[i + 1]);
    if (static_cast<long>(fields.size()) != cols) {
      throw ParseError("expected " + std::to_string(cols) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    }
    for (long j = 0; j < cols; ++j) m(i, j) = parse_real(fields[j], lineno);
  }
  return m;
}

}  // namespace fpg::csv

#endif  // FPG_CSV_HPP
