#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "gngan/autodiff.hpp"
#include "gngan/csv.hpp"
#include "gngan/nn.hpp"
#include "gngan/synthdata.hpp"

namespace gngan {

/// Samples within this many sigmas of their nearest center are registered.
inline constexpr double kRegistrationRadius = 3.0;
/// A mode counts as covered with at least this many registered samples.
inline constexpr std::size_t kCoverageThreshold = 20;

/// Nearest center within 3 sigma, or nullopt. Ties go to the lowest index.
inline std::vector<std::optional<std::size_t>> register_samples(const Matrix& samples,
                                                                 const GaussianMixtureSpec& spec) {
  spec.validate();
  if (samples.cols() != spec.centers.cols()) {
    throw ShapeError("register_samples: samples are " + shape_string(samples) + ", mixture is " +
                     std::to_string(spec.dim()) + "-d");
  }
  const double radius2 = kRegistrationRadius * kRegistrationRadius * spec.sigma * spec.sigma;
  std::vector<std::optional<std::size_t>> out(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index best_k = -1;
    for (Eigen::Index k = 0; k < spec.centers.rows(); ++k) {
      const double d2 = (samples.row(i) - spec.centers.row(k)).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_k = k;
      }
    }
    if (best_k >= 0 && best <= radius2) out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best_k);
  }
  return out;
}

inline std::vector<std::size_t> mode_counts(std::span<const std::optional<std::size_t>> assignment,
                                            std::size_t modes) {
  std::vector<std::size_t> counts(modes, 0);
  for (const auto& a : assignment)
    if (a) ++counts[*a];
  return counts;
}

/// Registered-mode proportions of a reference set (typically the training data).
inline std::vector<double> mode_proportions(const Matrix& points, const GaussianMixtureSpec& spec) {
  const auto counts = mode_counts(register_samples(points, spec), spec.modes());
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  std::vector<double> p(counts.size(), 0.0);
  if (total > 0.0)
    for (std::size_t k = 0; k < counts.size(); ++k) p[k] = static_cast<double>(counts[k]) / total;
  return p;
}

struct ModeReport {
  std::size_t covered_modes = 0;
  std::size_t registered_points = 0;
  std::vector<std::size_t> per_mode_counts;
  std::optional<double> tv_true;          // unset when nothing registered
  std::optional<double> tv_differential;  // unset when nothing registered or no reference
  std::size_t n_generated = 0;
  std::uint64_t seed = 0;
};

/// Coverage and mode-balance scores of generated samples. `reference` holds the
/// training set's registered proportions for the differential TV.
inline ModeReport mode_report(const Matrix& samples, const GaussianMixtureSpec& spec,
                              std::span<const double> reference = {}, std::uint64_t seed = 0) {
  ModeReport r;
  r.n_generated = static_cast<std::size_t>(samples.rows());
  r.seed = seed;
  r.per_mode_counts = mode_counts(register_samples(samples, spec), spec.modes());
  for (auto c : r.per_mode_counts) {
    r.registered_points += c;
    if (c >= kCoverageThreshold) ++r.covered_modes;
  }
  if (r.registered_points == 0) return r;

  const double total = static_cast<double>(r.registered_points);
  const double uniform = 1.0 / static_cast<double>(spec.modes());
  double tv = 0.0;
  for (auto c : r.per_mode_counts) tv += std::abs(static_cast<double>(c) / total - uniform);
  r.tv_true = 0.5 * tv;

  if (reference.size() == spec.modes()) {
    double tvd = 0.0;
    for (std::size_t k = 0; k < spec.modes(); ++k) {
      tvd += std::abs(static_cast<double>(r.per_mode_counts[k]) / total - reference[k]);
    }
    r.tv_differential = 0.5 * tvd;
  }
  return r;
}

inline void write_mode_report_header(std::ostream& os) {
  os << "seed,n_generated,covered_modes,registered_points,tv_true,tv_differential,per_mode_counts\n";
}

inline void write_mode_report_row(std::ostream& os, const ModeReport& r) {
  os << r.seed << ',' << r.n_generated << ',' << r.covered_modes << ',' << r.registered_points << ','
     << format_optional(r.tv_true) << ',' << format_optional(r.tv_differential) << ',';
  for (std::size_t k = 0; k < r.per_mode_counts.size(); ++k) os << (k ? ";" : "") << r.per_mode_counts[k];
  os << '\n';
}

// ---------------------------------------------------------------------------
// Discriminator diagnostics

/// Input gradients of `disc` at each row of `points`.
inline Matrix input_gradients(const Mlp& disc, const Matrix& points) {
  autodiff::Graph g;
  const auto x = g.constant(points);
  const auto scores = forward(disc, x, g);
  return g.value(g.grad_as_graph(scores, x));
}

struct GridBounds {
  double x_min = -5.0, x_max = 5.0;
  double y_min = -5.0, y_max = 5.0;
};

struct GradientSample {
  std::vector<double> point;
  std::vector<double> gradient;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

/// Discriminator input-gradient field on a regular lattice (endpoints included).
/// 2-d discriminators get an nx-by-ny lattice; 1-d ones use x bounds and nx.
inline std::vector<GradientSample> gradient_map(const Mlp& disc, const GridBounds& bounds, std::size_t nx,
                                                std::size_t ny) {
  if (nx < 1 || ny < 1) throw ValueError("gradient_map: resolution must be >= 1");
  const std::size_t dim = disc.in_dim();
  if (dim != 1 && dim != 2) throw ValueError("gradient_map: discriminator must take 1-d or 2-d input");
  const auto xs = linspace(bounds.x_min, bounds.x_max, nx);
  const auto ys = dim == 2 ? linspace(bounds.y_min, bounds.y_max, ny) : std::vector<double>{0.0};
  Matrix lattice(static_cast<Eigen::Index>(xs.size() * ys.size()), static_cast<Eigen::Index>(dim));
  Eigen::Index r = 0;
  for (double x : xs) {
    for (double y : ys) {
      lattice(r, 0) = x;
      if (dim == 2) lattice(r, 1) = y;
      ++r;
    }
  }
  const Matrix grads = input_gradients(disc, lattice);
  std::vector<GradientSample> out;
  out.reserve(static_cast<std::size_t>(lattice.rows()));
  for (Eigen::Index i = 0; i < lattice.rows(); ++i) {
    GradientSample s;
    s.point.assign(lattice.row(i).data(), lattice.row(i).data() + dim);
    s.gradient.assign(grads.row(i).data(), grads.row(i).data() + dim);
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_gradient_map_csv(std::ostream& os, std::span<const GradientSample> field) {
  const bool two_d = !field.empty() && field.front().point.size() == 2;
  os << (two_d ? "x,y,gx,gy\n" : "x,gx\n");
  for (const auto& s : field) {
    for (std::size_t j = 0; j < s.point.size(); ++j) os << format_double(s.point[j]) << ',';
    for (std::size_t j = 0; j < s.gradient.size(); ++j) os << (j ? "," : "") << format_double(s.gradient[j]);
    os << '\n';
  }
}

struct ScorePoint {
  double x = 0.0;
  double score = 0.0;
};

inline std::vector<ScorePoint> score_curve_1d(const Mlp& disc, std::span<const double> xs) {
  if (disc.in_dim() != 1) throw ValueError("score_curve_1d: discriminator must take 1-d input");
  if (xs.empty()) return {};
  Matrix in(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) in(static_cast<Eigen::Index>(i), 0) = xs[i];
  const Matrix s = evaluate(disc, in);
  std::vector<ScorePoint> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = {xs[i], s(static_cast<Eigen::Index>(i), 0)};
  return out;
}

inline void write_score_curve_csv(std::ostream& os, std::span<const ScorePoint> curve) {
  os << "x,score\n";
  for (const auto& p : curve) os << format_double(p.x) << ',' << format_double(p.score) << '\n';
}

}  // namespace gngan
