#include "aiv/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace aiv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

}  // namespace

MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  bool first_content_line = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    std::vector<double> values(cells.size());
    bool all_numeric = true;
    std::size_t bad_col = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_double(cells[c], values[c])) {
        all_numeric = false;
        bad_col = c;
        break;
      }
    }
    if (!all_numeric) {
      if (first_content_line) {
        first_content_line = false;  // header line, skip
        continue;
      }
      throw InvalidInput("cannot parse cell at row " + std::to_string(line_no) + ", column " +
                         std::to_string(bad_col + 1) + " of " + path + ": '" + cells[bad_col] +
                         "'");
    }
    if (rows.empty()) {
      width = values.size();
    } else if (values.size() != width) {
      throw InvalidInput("row " + std::to_string(line_no) + " of " + path + " has " +
                         std::to_string(values.size()) + " cells, expected " +
                         std::to_string(width));
    }
    first_content_line = false;
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw InvalidInput("no numeric rows in " + path);
  MatrixXd m(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

VectorXd read_csv_vector(const std::string& path) {
  const MatrixXd m = read_csv_matrix(path);
  if (m.cols() != 1) {
    throw InvalidInput(path + " must be a single column, found " + std::to_string(m.cols()));
  }
  return m.col(0);
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv_matrix(const std::string& path, const MatrixXd& m,
                      const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write file: " + path);
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != m.cols()) {
      throw InvalidInput("header width does not match matrix");
    }
    for (std::size_t j = 0; j < header.size(); ++j) {
      out << header[j] << (j + 1 < header.size() ? "," : "\n");
    }
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << format_full(m(i, j)) << (j + 1 < m.cols() ? "," : "\n");
    }
  }
}

}  // namespace aiv
