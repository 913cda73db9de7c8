#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "gngan/error.hpp"

namespace gngan {

/// Dense row-major matrix of doubles. Every tensor in the library is one of these.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Builds a matrix from nested initializer lists, e.g. `make_matrix({{1, 2}, {3, 4}})`.
inline Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto c = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.begin()->size());
  Matrix m(n, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != c) {
      throw ShapeError("make_matrix: ragged rows");
    }
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace gngan
