#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "gngan/csv.hpp"
#include "gngan/error.hpp"
#include "gngan/matrix.hpp"
#include "gngan/nn.hpp"

namespace gngan {

/// Equal-weight isotropic Gaussian mixture.
struct GaussianMixtureSpec {
  Matrix centers;  // K x d
  double sigma = 0.0;

  std::size_t modes() const { return static_cast<std::size_t>(centers.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centers.cols()); }

  double min_center_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < centers.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < centers.rows(); ++j) {
        best = std::min(best, (centers.row(i) - centers.row(j)).norm());
      }
    }
    return best;
  }

  /// Throws unless there is at least one center, sigma > 0 and modes are 6-sigma separated.
  void validate() const {
    if (centers.rows() < 1 || centers.cols() < 1) throw ValueError("mixture needs at least one center");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValueError("mixture sigma must be > 0");
    if (!centers.allFinite()) throw ValueError("mixture centers must be finite");
    if (centers.rows() > 1 && !(min_center_distance() > 6.0 * sigma)) {
      throw ValueError("mixture modes closer than 6 sigma");
    }
  }
};

/// 5x5 grid on {-4,-2,0,2,4}^2, sigma 0.1.
inline GaussianMixtureSpec grid25_spec() {
  GaussianMixtureSpec spec;
  spec.centers.resize(25, 2);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      spec.centers(i * 5 + j, 0) = -4.0 + 2.0 * i;
      spec.centers(i * 5 + j, 1) = -4.0 + 2.0 * j;
    }
  }
  spec.sigma = 0.1;
  return spec;
}

/// Three modes at -2, 0, 2 with sigma 0.3.
inline GaussianMixtureSpec tri1d_spec() {
  GaussianMixtureSpec spec;
  spec.centers = make_matrix({{-2.0}, {0.0}, {2.0}});
  spec.sigma = 0.3;
  return spec;
}

inline Matrix sample_data(const GaussianMixtureSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  if (n < 1) throw ValueError("sample_data: n must be >= 1");
  std::uniform_int_distribution<Eigen::Index> pick(0, spec.centers.rows() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(n), spec.centers.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Eigen::Index k = pick(rng);
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = spec.centers(k, j) + spec.sigma * normal(rng);
  }
  return out;
}

/// I.i.d. uniform on [-1, 1]^dim.
inline Matrix sample_prior(std::size_t dim, std::size_t n, Rng& rng) {
  if (dim < 1 || n < 1) throw ValueError("sample_prior: dim and n must be >= 1");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = u(rng);
  return out;
}

/// Writes points as CSV with header x1..xd.
inline void write_points_csv(std::ostream& os, const Matrix& points) {
  for (Eigen::Index j = 0; j < points.cols(); ++j) os << (j ? "," : "") << "x" << (j + 1);
  os << '\n';
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) os << (j ? "," : "") << format_double(points(i, j));
    os << '\n';
  }
}

/// Reads a CSV of points. A first line that does not parse as numbers is treated as a header.
inline Matrix read_points_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool numeric = true;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw FormatError("points csv: non-numeric row '" + line + "'");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) throw FormatError("points csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw FormatError("points csv: no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  if (!m.allFinite()) throw FormatError("points csv: non-finite value");
  return m;
}

inline Matrix read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_points_csv(in);
}

}  // namespace gngan
