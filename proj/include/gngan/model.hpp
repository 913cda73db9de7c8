#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <string>
#include <string_view>

#include "gngan/error.hpp"
#include "gngan/nn.hpp"

namespace gngan {

enum class LossVariant : std::uint8_t { log, hinge };

/// Which generator objective and regularisers a run uses.
///   standard_gan  plain GAN: no auto-encoder, no reconstruction reward, no gradient penalty
///   ne_only       auto-encoder with neighbour embedding, non-saturating generator loss
///   gm            auto-encoder (reconstruction only), gradient-matching generator loss
///   gm_ne         auto-encoder with neighbour embedding, gradient-matching generator loss
enum class GeneratorVariant : std::uint8_t { standard_gan, gm, ne_only, gm_ne };

inline std::string_view to_string(LossVariant v) { return v == LossVariant::log ? "log" : "hinge"; }

inline std::string_view to_string(GeneratorVariant v) {
  switch (v) {
    case GeneratorVariant::standard_gan: return "standard_gan";
    case GeneratorVariant::gm: return "gm";
    case GeneratorVariant::ne_only: return "ne_only";
    case GeneratorVariant::gm_ne: return "gm_ne";
  }
  return "<unknown>";
}

inline LossVariant parse_loss_variant(std::string_view s) {
  if (s == "log") return LossVariant::log;
  if (s == "hinge") return LossVariant::hinge;
  throw ValueError("loss: expected log or hinge, got '" + std::string(s) + "'");
}

inline GeneratorVariant parse_generator_variant(std::string_view s) {
  if (s == "standard_gan") return GeneratorVariant::standard_gan;
  if (s == "gm") return GeneratorVariant::gm;
  if (s == "ne_only") return GeneratorVariant::ne_only;
  if (s == "gm_ne") return GeneratorVariant::gm_ne;
  throw ValueError("variant: expected standard_gan, gm, ne_only or gm_ne, got '" + std::string(s) + "'");
}

struct HyperParams {
  double lambda_p = 0.1;   // gradient penalty weight
  double lambda_r = 0.1;   // neighbour-embedding weight (only used by NE variants)
  double lambda_m1 = 0.1;  // gradient-norm matching weight
  double lambda_m2 = 0.1;  // gradient-input product matching weight
  double alpha = 0.05;     // weight of reconstructions scored as real
  LossVariant loss = LossVariant::log;
  GeneratorVariant variant = GeneratorVariant::gm;
  std::size_t batch_size = 128;
  std::size_t latent_dim = 2;
  std::size_t epochs = 500;
  double lr = 1e-3;
  double beta1 = 0.8;
  double beta2 = 0.999;
  std::uint64_t lr_decay_every = 10000;
  double lr_decay_base = 0.99;
  std::uint64_t seed = 0;
  bool latent_affinity_grad = false;  // let the NE gradient flow into E through P
  bool gm_vector_form = false;        // match mean gradient vectors instead of mean norms

  bool trains_autoencoder() const { return variant != GeneratorVariant::standard_gan; }
  bool uses_neighbor_embedding() const {
    return variant == GeneratorVariant::ne_only || variant == GeneratorVariant::gm_ne;
  }
  bool uses_gradient_matching() const { return variant == GeneratorVariant::gm || variant == GeneratorVariant::gm_ne; }

  /// Copy with the weights the variant switches off forced to zero.
  HyperParams resolved() const {
    HyperParams r = *this;
    if (!uses_neighbor_embedding()) r.lambda_r = 0.0;
    if (variant == GeneratorVariant::standard_gan) {
      r.alpha = 0.0;
      r.lambda_p = 0.0;
    }
    return r;
  }

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValueError(std::string(name) + ": must be >= 0");
    };
    nonneg(lambda_p, "lambda_p");
    nonneg(lambda_r, "lambda_r");
    nonneg(lambda_m1, "lambda_m1");
    nonneg(lambda_m2, "lambda_m2");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("alpha: must lie in [0, 1]");
    if (batch_size < 2) throw ValueError("batch_size: must be >= 2");
    if (latent_dim < 1) throw ValueError("latent_dim: must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("lr: must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValueError("beta1: must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValueError("beta2: must lie in [0, 1)");
    if (!(lr_decay_base > 0.0 && lr_decay_base <= 1.0)) throw ValueError("lr_decay_base: must lie in (0, 1]");
  }
};

/// Layer sizes of the three networks. Hidden layers are ReLU; E and G have linear
/// outputs, D a sigmoid output.
struct ModelShape {
  std::size_t data_dim = 2;
  std::size_t eg_hidden_layers = 2;
  std::size_t eg_hidden_width = 64;
  std::size_t d_hidden_layers = 2;
  std::size_t d_hidden_width = 64;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Two hidden layers of 64 units for every network.
inline ModelShape shape_2d() { return {2, 2, 64, 2, 64}; }

/// Three-layer E and G and two-layer D, hidden width 4.
inline ModelShape shape_1d() { return {1, 2, 4, 1, 4}; }

struct GnGanModel {
  Mlp encoder;
  Mlp generator;
  Mlp discriminator;
  AdamState ae_opt;  // over encoder then generator parameters
  AdamState d_opt;
  AdamState g_opt;
};

inline std::vector<const Matrix*> autoencoder_parameters(const GnGanModel& m) {
  auto out = m.encoder.parameters();
  for (const auto* p : m.generator.parameters()) out.push_back(p);
  return out;
}

inline GnGanModel make_model(const ModelShape& shape, const HyperParams& hp, Rng& rng) {
  if (shape.data_dim < 1) throw ValueError("data_dim: must be >= 1");
  GnGanModel m;
  const auto e_specs = mlp_specs(shape.data_dim, hp.latent_dim, shape.eg_hidden_layers, shape.eg_hidden_width,
                                 Activation::none);
  const auto g_specs = mlp_specs(hp.latent_dim, shape.data_dim, shape.eg_hidden_layers, shape.eg_hidden_width,
                                 Activation::none);
  const auto d_specs = mlp_specs(shape.data_dim, 1, shape.d_hidden_layers, shape.d_hidden_width,
                                 Activation::sigmoid);
  m.encoder = init_mlp(e_specs, rng);
  m.generator = init_mlp(g_specs, rng);
  m.discriminator = init_mlp(d_specs, rng);
  const auto ae_params = autoencoder_parameters(m);
  m.ae_opt = make_adam(ae_params, hp.lr, hp.beta1, hp.beta2);
  const auto d_params = std::as_const(m.discriminator).parameters();
  m.d_opt = make_adam(d_params, hp.lr, hp.beta1, hp.beta2);
  const auto g_params = std::as_const(m.generator).parameters();
  m.g_opt = make_adam(g_params, hp.lr, hp.beta1, hp.beta2);
  return m;
}

}  // namespace gngan
