#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "sse/errors.hpp"

namespace sse {

/// Round-trippable rendering ("%.17g"); negative zero prints as "0".
inline std::string format_real(double value) {
  if (value == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

// Plain-text matrix format: a "rows cols" header line, then the entries in
// row-major order separated by whitespace (one row per line when written).

inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& M) {
  os << M.rows() << ' ' << M.cols() << '\n';
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      if (c > 0) os << ' ';
      os << format_real(M(r, c));
    }
    os << '\n';
  }
}

inline Eigen::MatrixXd read_matrix(std::istream& is) {
  long rows = -1, cols = -1;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0) {
    throw ParseError("read_matrix: expected a 'rows cols' header");
  }
  Eigen::MatrixXd M(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      std::string token;
      if (!(is >> token)) {
        throw ParseError("read_matrix: expected " + std::to_string(rows * cols) +
                         " entries, input ended early");
      }
      try {
        std::size_t used = 0;
        M(r, c) = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw ParseError("read_matrix: bad number '" + token + "'");
      }
    }
  }
  std::string extra;
  if (is >> extra) {
    throw ParseError("read_matrix: trailing data after " +
                     std::to_string(rows * cols) + " entries");
  }
  return M;
}

inline Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open matrix file '" + path + "'");
  try {
    return read_matrix(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void save_matrix(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write matrix file '" + path + "'");
  write_matrix(out, M);
}

}  // namespace sse
