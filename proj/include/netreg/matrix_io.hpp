#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>
#include "netreg/error.hpp"
#include "netreg/linalg.hpp"

namespace netreg::io {

using json = nlohmann::json;

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

/// CSV layout: a `# rows cols` header line, then one comma-separated row per line.
inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  os << "# " << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline Matrix read_matrix_csv(std::istream& is) {
  std::string line;
  Index rows = -1;
  Index cols = -1;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream hs(line);
    char hash = 0;
    if (!(hs >> hash >> rows >> cols) || hash != '#' || rows < 0 || cols < 0) {
      throw ParseError("matrix CSV: expected '# rows cols' header, got '" + line + "'");
    }
    break;
  }
  if (rows < 0) throw ParseError("matrix CSV: missing header");
  Matrix m(rows, cols);
  Index r = 0;
  while (r < rows && std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != cols) {
      throw ParseError("matrix CSV: row " + std::to_string(r) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(cols));
    }
    for (Index j = 0; j < cols; ++j) m(r, j) = parse_double(fields[j]);
    ++r;
  }
  if (r != rows) {
    throw ParseError("matrix CSV: expected " + std::to_string(rows) + " rows, found " +
                     std::to_string(r));
  }
  return m;
}

/// JSON envelope {"rows": n, "cols": m, "data": [row-major values]}.
inline json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw ParseError("matrix JSON: expected object with rows, cols, data");
  }
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() ||
      static_cast<Index>(data.size()) != rows * cols) {
    throw ParseError("matrix JSON: data length does not match rows*cols");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
  }
  return m;
}

inline bool has_json_extension(const std::filesystem::path& p) {
  return p.extension() == ".json";
}

/// Writes CSV, or the JSON envelope when the path ends in `.json`.
inline void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  if (has_json_extension(path)) {
    os << matrix_to_json(m).dump() << '\n';
  } else {
    write_matrix_csv(os, m);
  }
  if (!os) throw Error("write to '" + path.string() + "' failed");
}

inline Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "' for reading");
  try {
    if (has_json_extension(path)) return matrix_from_json(json::parse(is));
    return read_matrix_csv(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline Vector load_vector(const std::filesystem::path& path) {
  const Matrix m = load_matrix(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw ParseError(path.string() + ": expected a single row or column");
}

/// Per-unit data table: header `y,x1,...,xd`, then one row per unit.
struct DataTable {
  Vector y;
  Matrix x;
};

inline void write_data_csv(std::ostream& os, const Vector& y, const Matrix& x) {
  if (x.rows() != y.size()) throw DimensionError("write_data_csv: row count mismatch");
  os << 'y';
  for (Index k = 0; k < x.cols(); ++k) os << ",x" << (k + 1);
  os << '\n';
  for (Index i = 0; i < y.size(); ++i) {
    os << format_double(y(i));
    for (Index k = 0; k < x.cols(); ++k) os << ',' << format_double(x(i, k));
    os << '\n';
  }
}

inline DataTable read_data_csv(std::istream& is) {
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      if (!fields.empty() && !fields[0].empty() &&
          (fields[0][0] == 'y' || fields[0][0] == '#')) {
        continue;
      }
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width || width < 2) {
      throw ParseError("data CSV: inconsistent or too few columns in '" + line + "'");
    }
    std::vector<double> row;
    row.reserve(width);
    for (auto f : fields) row.push_back(parse_double(f));
    rows.push_back(std::move(row));
  }
  DataTable t;
  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(width) - 1;
  t.y.resize(n);
  t.x.resize(n, std::max<Index>(d, 0));
  for (Index i = 0; i < n; ++i) {
    t.y(i) = rows[i][0];
    for (Index k = 0; k < d; ++k) t.x(i, k) = rows[i][k + 1];
  }
  return t;
}

inline void save_data_csv(const std::filesystem::path& path, const Vector& y, const Matrix& x) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  write_data_csv(os, y, x);
  if (!os) throw Error("write to '" + path.string() + "' failed");
}

inline DataTable load_data_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "' for reading");
  try {
    return read_data_csv(is);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace netreg::io
