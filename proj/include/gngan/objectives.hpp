#pragma once

// Auto-encoder, discriminator and generator objectives.

#include <random>

#include "gngan/affinity.hpp"
#include "gngan/autodiff.hpp"
#include "gngan/model.hpp"
#include "gngan/nn.hpp"

namespace gngan {

/// Discriminator outputs are clamped to this margin before any log.
inline constexpr double kScoreClamp = 1e-7;

using autodiff::Graph;
using autodiff::NodeId;

/// Mean over rows of |x - G(E(x))|^2, plus lambda_r times the neighbour-embedding
/// KL over the merged sets {E(x)} u {z} and {G(E(x))} u {G(z)}.
inline NodeId ae_loss(Graph& g, const BoundMlp& enc, const BoundMlp& gen, const Matrix& x, const Matrix& z,
                      double lambda_r, bool latent_gradient = false) {
  if (x.rows() < 1 || z.rows() < 1) throw ValueError("ae_loss: empty batch");
  const auto xn = g.constant(x);
  const auto code = forward(enc, xn, g);
  const auto recon = forward(gen, code, g);
  const auto err = g.sum_all(g.square(g.sub(recon, xn)));
  auto loss = g.scalar_mul(err, 1.0 / static_cast<double>(x.rows()));
  if (lambda_r > 0.0) {
    const auto zn = g.constant(z);
    const auto latents = g.concat_rows(code, zn);
    const auto generated = g.concat_rows(recon, forward(gen, zn, g));
    loss = g.add(loss, g.scalar_mul(ne_loss(g, latents, generated, latent_gradient), lambda_r));
  }
  return loss;
}

/// Mean over rows of (|grad D(x_hat)| - 1)^2 at x_hat = mu x + (1 - mu) gz, one mu ~ U[0,1] per row.
inline NodeId gp_term(Graph& g, const BoundMlp& disc, const Matrix& x, const Matrix& gz, Rng& rng) {
  if (x.rows() != gz.rows() || x.cols() != gz.cols()) {
    throw ShapeError("gp_term: real " + shape_string(x) + " vs generated " + shape_string(gz));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix xhat(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = u(rng);
    xhat.row(i) = mu * x.row(i) + (1.0 - mu) * gz.row(i);
  }
  const auto xn = g.constant(std::move(xhat));
  const auto grad = g.grad_as_graph(forward(disc, xn, g), xn);
  return g.mean_all(g.square(g.add_scalar(g.row_l2_norm(grad), -1.0)));
}

/// Inputs the discriminator sees; E and G are frozen during its update.
struct DiscriminatorBatch {
  Matrix real;           // x
  Matrix reconstructed;  // G(E(x))
  Matrix generated;      // G(z)
};

inline DiscriminatorBatch discriminator_batch(const GnGanModel& m, const Matrix& x, const Matrix& z) {
  return {x, evaluate(m.generator, evaluate(m.encoder, x)), evaluate(m.generator, z)};
}

namespace detail {

struct Scores {
  NodeId real, reconstructed, generated;
};

inline Scores score_batch(Graph& g, const BoundMlp& disc, const DiscriminatorBatch& b) {
  const Eigen::Index nr = b.real.rows(), nc = b.reconstructed.rows(), ng = b.generated.rows();
  Matrix all(nr + nc + ng, b.real.cols());
  all << b.real, b.reconstructed, b.generated;
  const auto s = forward(disc, g.constant(std::move(all)), g);
  return {g.slice_rows(s, 0, nr), g.slice_rows(s, nr, nc), g.slice_rows(s, nr + nc, ng)};
}

inline NodeId mean_log(Graph& g, NodeId p) { return g.mean_all(g.log(g.clamp(p, kScoreClamp, 1.0 - kScoreClamp))); }

inline NodeId mean_log_complement(Graph& g, NodeId p) {
  return g.mean_all(g.log(g.add_scalar(g.scalar_mul(g.clamp(p, kScoreClamp, 1.0 - kScoreClamp), -1.0), 1.0)));
}

inline NodeId subtract_penalty(Graph& g, NodeId objective, const BoundMlp& disc, const DiscriminatorBatch& b,
                               const HyperParams& hp, Rng& rng) {
  if (hp.lambda_p <= 0.0) return objective;
  const auto penalty = gp_term(g, disc, b.real, b.generated, rng);
  return g.sub(objective, g.scalar_mul(penalty, hp.lambda_p));
}

}  // namespace detail

/// (1-a) E log D(x) + a E log D(G(E(x))) + E log(1 - D(G(z))) - lambda_p V_P. To be maximised.
inline NodeId d_loss_log(Graph& g, const BoundMlp& disc, const DiscriminatorBatch& b, const HyperParams& hp,
                         Rng& rng) {
  const auto s = detail::score_batch(g, disc, b);
  auto v = g.scalar_mul(detail::mean_log(g, s.real), 1.0 - hp.alpha);
  v = g.add(v, g.scalar_mul(detail::mean_log(g, s.reconstructed), hp.alpha));
  v = g.add(v, detail::mean_log_complement(g, s.generated));
  return detail::subtract_penalty(g, v, disc, b, hp, rng);
}

/// (1-a) E D(x) + a E D(G(E(x))) - E D(G(z)) - lambda_p V_P. To be maximised.
inline NodeId d_loss_hinge(Graph& g, const BoundMlp& disc, const DiscriminatorBatch& b, const HyperParams& hp,
                           Rng& rng) {
  const auto s = detail::score_batch(g, disc, b);
  auto v = g.scalar_mul(g.mean_all(s.real), 1.0 - hp.alpha);
  v = g.add(v, g.scalar_mul(g.mean_all(s.reconstructed), hp.alpha));
  v = g.sub(v, g.mean_all(s.generated));
  return detail::subtract_penalty(g, v, disc, b, hp, rng);
}

inline NodeId d_objective(Graph& g, const BoundMlp& disc, const DiscriminatorBatch& b, const HyperParams& hp,
                          Rng& rng) {
  return hp.loss == LossVariant::log ? d_loss_log(g, disc, b, hp, rng) : d_loss_hinge(g, disc, b, hp, rng);
}

/// Gradient-matching generator objective:
///   |E D(x) - E D(G(z))|
///   + lambda_m1 (E|grad D(x)| - E|grad D(G(z))|)^2
///   + lambda_m2 (E|grad D(x)^T x| - E|grad D(G(z))^T G(z)|)^2
/// With `hp.gm_vector_form` the second term compares mean gradient vectors and the
/// third the signed means of the products.
inline NodeId g_loss_gm(Graph& g, const BoundMlp& disc, const BoundMlp& gen, const Matrix& x, const Matrix& z,
                        const HyperParams& hp) {
  const auto xn = g.constant(x);
  const auto real_scores = forward(disc, xn, g);
  const auto real_grad = g.grad_as_graph(real_scores, xn);

  const auto fake = forward(gen, g.constant(z), g);
  if (g.value(fake).cols() != x.cols()) throw ShapeError("g_loss_gm: generator output does not match data dim");
  const auto fake_scores = forward(disc, fake, g);
  const auto fake_grad = g.grad_as_graph(fake_scores, fake);

  auto v = g.abs(g.sub(g.mean_all(real_scores), g.mean_all(fake_scores)));

  if (hp.lambda_m1 > 0.0) {
    NodeId term;
    if (hp.gm_vector_form) {
      const auto mean_real = g.scalar_mul(g.sum_rows(real_grad), 1.0 / static_cast<double>(x.rows()));
      const auto mean_fake = g.scalar_mul(g.sum_rows(fake_grad), 1.0 / static_cast<double>(z.rows()));
      term = g.sum_all(g.square(g.sub(mean_real, mean_fake)));
    } else {
      term = g.square(g.sub(g.mean_all(g.row_l2_norm(real_grad)), g.mean_all(g.row_l2_norm(fake_grad))));
    }
    v = g.add(v, g.scalar_mul(term, hp.lambda_m1));
  }
  if (hp.lambda_m2 > 0.0) {
    auto real_dot = g.rowwise_dot(real_grad, xn);
    auto fake_dot = g.rowwise_dot(fake_grad, fake);
    if (!hp.gm_vector_form) {
      real_dot = g.abs(real_dot);
      fake_dot = g.abs(fake_dot);
    }
    const auto term = g.square(g.sub(g.mean_all(real_dot), g.mean_all(fake_dot)));
    v = g.add(v, g.scalar_mul(term, hp.lambda_m2));
  }
  return v;
}

/// Non-saturating generator loss -E log D(G(z)).
inline NodeId g_loss_standard(Graph& g, const BoundMlp& disc, const BoundMlp& gen, const Matrix& z) {
  const auto fake = forward(gen, g.constant(z), g);
  return g.scalar_mul(detail::mean_log(g, forward(disc, fake, g)), -1.0);
}

}  // namespace gngan
