#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ocppe/data.hpp"

namespace ocppe {

// RFC-4180 reader: quoted fields, embedded commas/quotes/newlines, CRLF.
// Returns one vector of fields per record.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(row);
    row.clear();
  };
  while (i < content.size()) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
      end_row();
    } else if (c == '\n') {
      end_row();
    } else {
      field.push_back(c);
    }
    ++i;
  }
  if (!field.empty() || !row.empty()) end_row();
  if (in_quotes) throw DataError("CSV parse error in " + path + ": unterminated quote");
  return rows;
}

// Dataset loader: header row required; columns named y and d are mandatory,
// all remaining columns are controls in file order.
inline Dataset read_dataset(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2)
    throw DataError("CSV " + path + ": need a header row and at least 2 data rows");
  const auto& header = rows.front();

  std::ptrdiff_t y_col = -1, d_col = -1;
  std::vector<std::size_t> x_cols;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "y" && y_col < 0) {
      y_col = static_cast<std::ptrdiff_t>(j);
    } else if (header[j] == "d" && d_col < 0) {
      d_col = static_cast<std::ptrdiff_t>(j);
    } else {
      x_cols.push_back(j);
      names.push_back(header[j]);
    }
  }
  if (y_col < 0) throw DataError("CSV " + path + ": required column 'y' missing");
  if (d_col < 0) throw DataError("CSV " + path + ": required column 'd' missing");

  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  Dataset data;
  data.y.resize(n);
  data.d.resize(n);
  data.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  data.control_names = names;

  auto parse_field = [&](const std::string& s, std::size_t line) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw DataError("CSV " + path + ": line " + std::to_string(line) +
                      ": cannot parse numeric value '" + s + "'");
    }
  };

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = r + 1;
    if (row.size() != header.size())
      throw DataError("CSV " + path + ": line " + std::to_string(line) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(row.size()));
    const auto i = static_cast<Eigen::Index>(r - 1);
    data.y[i] = parse_field(row[static_cast<std::size_t>(y_col)], line);
    data.d[i] = parse_field(row[static_cast<std::size_t>(d_col)], line);
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      data.x(i, static_cast<Eigen::Index>(k)) = parse_field(row[x_cols[k]], line);
  }
  data.validate();
  return data;
}

// 17 significant digits: reruns can be compared byte for byte.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

struct CsvWriter {
  std::ostringstream out;
  bool row_started = false;

  void field(const std::string& s) {
    if (row_started) out << ',';
    out << csv_escape(s);
    row_started = true;
  }
  void field(double v) { field(format_double(v)); }
  void field(Eigen::Index v) { field(std::to_string(v)); }
  void field(int v) { field(std::to_string(v)); }
  void end_row() {
    out << '\n';
    row_started = false;
  }
  std::string str() const { return out.str(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
}

}  // namespace ocppe
