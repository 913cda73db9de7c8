#pragma once

// Student-t neighbour affinities and the neighbour-embedding KL penalty.
//
// Latent structure P and generated structure Q are built the same way:
// conditional affinities with a heavy-tailed kernel whose bandwidth is the
// variance of all pairwise distances in the point set, then symmetrised into
// a joint distribution over ordered pairs with a zero diagonal.

#include <cmath>
#include <limits>

#include "gngan/autodiff.hpp"
#include "gngan/error.hpp"
#include "gngan/matrix.hpp"

namespace gngan {

inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kAffinityFloor = 1e-12;

enum class AffinityKind { latent_p, data_q };

struct AffinityMatrix {
  Matrix values;
  AffinityKind kind = AffinityKind::latent_p;
};

inline Matrix pairwise_squared_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2(i, j) = d2(j, i) = (points.row(i) - points.row(j)).squaredNorm();
    }
  }
  return d2;
}

/// Population variance of {|x_i - x_j| : i < j}, floored at 1e-12.
inline double pairwise_distance_variance(const Matrix& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw ValueError("pairwise_distance_variance: need at least 2 points");
  const Matrix d2 = pairwise_squared_distances(points);
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) mean += std::sqrt(d2(i, j));
  mean /= pairs;
  double var = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dev = std::sqrt(d2(i, j)) - mean;
      var += dev * dev;
    }
  }
  return std::max(var / pairs, kVarianceFloor);
}

/// Row i holds p_{j|i}: kernel (1 + |x_j - x_i|^2 / 2 sigma2)^-1 normalised over j != i.
inline Matrix conditional_affinities(const Matrix& points, double sigma2) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw ValueError("conditional_affinities: need at least 2 points");
  if (!(sigma2 > 0.0)) throw ValueError("conditional_affinities: sigma^2 must be > 0");
  Matrix k = (1.0 + pairwise_squared_distances(points).array() / (2.0 * sigma2)).inverse().matrix();
  k.diagonal().setZero();
  const Eigen::VectorXd row_sums = k.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) k.row(i) /= row_sums(i);
  return k;
}

/// Symmetric joint affinities (p_{i|j} + p_{j|i}) / 2n; bandwidth from the same point set.
inline AffinityMatrix joint_affinities(const Matrix& points, AffinityKind kind = AffinityKind::latent_p) {
  const Matrix c = conditional_affinities(points, pairwise_distance_variance(points));
  const double scale = 1.0 / (2.0 * static_cast<double>(points.rows()));
  return {(c + c.transpose()) * scale, kind};
}

/// Differentiable joint affinities of the rows of `points`.
inline autodiff::NodeId joint_affinities_node(autodiff::Graph& g, autodiff::NodeId points) {
  const Eigen::Index n = g.value(points).rows();
  if (n < 2) throw ValueError("joint_affinities: need at least 2 points");

  // Coordinate-wise differences keep d2 exactly zero on the diagonal and for coincident points.
  const Eigen::Index dim = g.value(points).cols();
  const auto cols = g.transpose(points);
  autodiff::NodeId d2{};
  for (Eigen::Index k = 0; k < dim; ++k) {
    const auto spread = g.broadcast_cols(g.transpose(g.slice_rows(cols, k, 1)), n);  // (i, j) = x_ik
    const auto sq = g.square(g.sub(spread, g.transpose(spread)));
    d2 = k == 0 ? sq : g.add(d2, sq);
  }

  Matrix upper = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) upper(i, j) = 1.0;
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const auto upper_mask = g.constant(std::move(upper));

  const auto dist = g.sqrt(d2);
  const auto mean = g.scalar_mul(g.sum_all(g.mul(upper_mask, dist)), 1.0 / pairs);
  const auto dev = g.sub(dist, g.broadcast_scalar(mean, n, n));
  auto var = g.scalar_mul(g.sum_all(g.mul(upper_mask, g.square(dev))), 1.0 / pairs);
  var = g.clamp(var, kVarianceFloor, std::numeric_limits<double>::infinity());

  const auto inv_two_var = g.broadcast_scalar(g.reciprocal(g.scalar_mul(var, 2.0)), n, n);
  auto kernel = g.reciprocal(g.add_scalar(g.mul(d2, inv_two_var), 1.0));
  Matrix off_diag = Matrix::Ones(n, n);
  off_diag.diagonal().setZero();
  kernel = g.mul(kernel, g.constant(std::move(off_diag)));

  const auto row_sums = g.sum_cols(kernel);
  const auto cond = g.mul(kernel, g.broadcast_cols(g.reciprocal(row_sums), n));
  return g.scalar_mul(g.add(cond, g.transpose(cond)), 1.0 / (2.0 * static_cast<double>(n)));
}

/// KL(P || Q) between latent and generated neighbour structure.
///
/// By default P is computed from the latent values and held constant; with
/// `latent_gradient` it is built on the graph as well.
inline autodiff::NodeId ne_loss(autodiff::Graph& g, autodiff::NodeId latents, autodiff::NodeId generated,
                                bool latent_gradient = false) {
  const Eigen::Index n = g.value(latents).rows();
  if (g.value(generated).rows() != n) {
    throw ShapeError("ne_loss: " + std::to_string(n) + " latents vs " + std::to_string(g.value(generated).rows()) +
                     " generated points");
  }
  if (n < 2) throw ValueError("ne_loss: need at least 2 points");
  constexpr double inf = std::numeric_limits<double>::infinity();

  const auto q = joint_affinities_node(g, generated);
  const auto log_q = g.log(g.clamp(q, kAffinityFloor, inf));

  if (latent_gradient) {
    const auto p = joint_affinities_node(g, latents);
    const auto log_p = g.log(g.clamp(p, kAffinityFloor, inf));
    return g.sum_all(g.mul(p, g.sub(log_p, log_q)));
  }

  const Matrix p = joint_affinities(g.value(latents)).values;
  double entropy_term = 0.0;  // sum p log p over p > 0
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    if (v > 0.0) entropy_term += v * std::log(v);
  }
  Matrix neg_p = -p;
  const auto cross = g.sum_all(g.mul(g.constant(std::move(neg_p)), log_q));
  return g.add_scalar(cross, entropy_term);
}

}  // namespace gngan
