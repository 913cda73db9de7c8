#pragma once

// Three-phase training: auto-encoder, then discriminator, then generator, each
// phase on the same (x, z) draw and with its own graph and Adam state.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gngan/eval.hpp"
#include "gngan/model.hpp"
#include "gngan/objectives.hpp"
#include "gngan/synthdata.hpp"

namespace gngan {

/// A phase produced a non-finite loss or gradient.
class TrainingAborted : public NumericError {
public:
  TrainingAborted(std::string phase, const std::string& what)
      : NumericError("training aborted in " + phase + " phase: " + what), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

private:
  std::string phase_;
};

struct StepDiagnostics {
  double v_ae = 0.0;
  double v_d = 0.0;  // maximisation objective
  double v_g = 0.0;
  double grad_norm_ae = 0.0;
  double grad_norm_d = 0.0;
  double grad_norm_g = 0.0;
};

namespace detail {

inline std::vector<Matrix> collect_grads(const autodiff::Gradients& grads, const std::vector<BoundMlp>& nets) {
  std::vector<Matrix> out;
  for (const auto& b : nets) {
    const auto params = b.net->parameters();
    for (std::size_t i = 0; i < b.params.size(); ++i) {
      if (grads.contains(b.params[i])) {
        out.push_back(grads.at(b.params[i]));
      } else {
        out.push_back(Matrix::Zero(params[i]->rows(), params[i]->cols()));
      }
    }
  }
  return out;
}

inline double global_norm(const std::vector<Matrix>& grads) {
  double s = 0.0;
  for (const auto& gm : grads) s += gm.squaredNorm();
  return std::sqrt(s);
}

template <class Fn>
auto run_phase(const char* phase, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw TrainingAborted(phase, e.what());
  }
}

}  // namespace detail

/// Auto-encoder update of E and G on V_AE. Fills `v_ae` and `grad_norm_ae`.
inline void autoencoder_phase(GnGanModel& model, const Matrix& x, const Matrix& z, const HyperParams& hp,
                              StepDiagnostics& out) {
  detail::run_phase("autoencoder", [&] {
    Graph g;
    const auto enc = bind(model.encoder, g, true);
    const auto gen = bind(model.generator, g, true);
    const auto loss = ae_loss(g, enc, gen, x, z, hp.lambda_r, hp.latent_affinity_grad);
    out.v_ae = g.scalar(loss);
    const auto grads = detail::collect_grads(g.backward(loss), {enc, gen});
    out.grad_norm_ae = detail::global_norm(grads);
    auto params = model.encoder.parameters();
    for (auto* p : model.generator.parameters()) params.push_back(p);
    adam_step(params, grads, model.ae_opt, "autoencoder loss");
    return 0;
  });
}

/// Discriminator ascent on V_D with E and G frozen. `rng` supplies the penalty interpolation.
inline void discriminator_phase(GnGanModel& model, const Matrix& x, const Matrix& z, const HyperParams& hp, Rng& rng,
                                StepDiagnostics& out) {
  detail::run_phase("discriminator", [&] {
    const auto batch = discriminator_batch(model, x, z);
    Graph g;
    const auto disc = bind(model.discriminator, g, true);
    const auto objective = d_objective(g, disc, batch, hp, rng);
    out.v_d = g.scalar(objective);
    const auto loss = g.scalar_mul(objective, -1.0);
    const auto grads = detail::collect_grads(g.backward(loss), {disc});
    out.grad_norm_d = detail::global_norm(grads);
    adam_step(model.discriminator.parameters(), grads, model.d_opt, "discriminator loss");
    return 0;
  });
}

/// Generator update with D frozen: gradient matching or the non-saturating loss.
inline void generator_phase(GnGanModel& model, const Matrix& x, const Matrix& z, const HyperParams& hp,
                            StepDiagnostics& out) {
  detail::run_phase("generator", [&] {
    Graph g;
    const auto disc = bind(model.discriminator, g, false);
    const auto gen = bind(model.generator, g, true);
    const auto loss = hp.uses_gradient_matching() ? g_loss_gm(g, disc, gen, x, z, hp) : g_loss_standard(g, disc, gen, z);
    out.v_g = g.scalar(loss);
    const auto grads = detail::collect_grads(g.backward(loss), {gen});
    out.grad_norm_g = detail::global_norm(grads);
    adam_step(model.generator.parameters(), grads, model.g_opt, "generator loss");
    return 0;
  });
}

/// One iteration of the three phases on the same (x, z) draw.
inline StepDiagnostics train_step(GnGanModel& model, const Matrix& x, const Matrix& z, const HyperParams& hp_in,
                                  Rng& rng) {
  const HyperParams hp = hp_in.resolved();
  StepDiagnostics out;
  if (hp.trains_autoencoder()) autoencoder_phase(model, x, z, hp, out);
  discriminator_phase(model, x, z, hp, rng, out);
  generator_phase(model, x, z, hp, out);
  return out;
}

// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kEvalSeedMask = 0x9E3779B97F4A7C15ULL;

struct TrainConfig {
  HyperParams hp;
  ModelShape shape = shape_2d();
  /// Mixture used to sample the training set (when `points` is empty) and to score samples.
  std::optional<GaussianMixtureSpec> mixture = grid25_spec();
  /// Explicit training set; overrides sampling from `mixture`.
  std::optional<Matrix> points;
  std::size_t dataset_size = 50000;
  std::size_t eval_every = 10000;  // 0 disables intermediate evaluation
  std::size_t log_every = 100;
  std::size_t eval_samples = 2000;
};

struct MetricsRow {
  std::uint64_t iteration = 0;  // iterations completed
  StepDiagnostics step;
  double lr = 0.0;
  std::optional<ModeReport> report;
};

/// Independent streams derived from the run seed.
inline Rng derive_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

/// Stateful training run; owns model, data and random streams.
class Trainer {
public:
  using RowCallback = std::function<void(const MetricsRow&)>;

  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.hp.validate();
    if (cfg_.points) {
      dataset_ = *cfg_.points;
    } else {
      if (!cfg_.mixture) throw ValueError("training needs either points or a mixture");
      Rng data_rng = derive_rng(cfg_.hp.seed, 1);
      dataset_ = sample_data(*cfg_.mixture, cfg_.dataset_size, data_rng);
    }
    if (static_cast<std::size_t>(dataset_.cols()) != cfg_.shape.data_dim) {
      throw ValueError("dataset has " + std::to_string(dataset_.cols()) + " columns, model expects " +
                       std::to_string(cfg_.shape.data_dim));
    }
    if (static_cast<std::size_t>(dataset_.rows()) < cfg_.hp.batch_size) {
      throw ValueError("batch_size: larger than the dataset");
    }
    if (cfg_.mixture) {
      if (cfg_.mixture->dim() != cfg_.shape.data_dim) throw ValueError("mixture dimension does not match data_dim");
      reference_ = mode_proportions(dataset_, *cfg_.mixture);
    }
    Rng init_rng = derive_rng(cfg_.hp.seed, 2);
    model_ = make_model(cfg_.shape, cfg_.hp, init_rng);
    rng_ = derive_rng(cfg_.hp.seed, 3);
    order_.resize(static_cast<std::size_t>(dataset_.rows()));
  }

  std::uint64_t iterations_per_epoch() const {
    return static_cast<std::uint64_t>(dataset_.rows()) / cfg_.hp.batch_size;
  }
  std::uint64_t total_iterations() const { return iterations_per_epoch() * cfg_.hp.epochs; }
  std::uint64_t iteration() const { return iteration_; }
  bool done() const { return iteration_ >= total_iterations(); }

  const GnGanModel& model() const { return model_; }
  GnGanModel& model() { return model_; }
  const Matrix& dataset() const { return dataset_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<double>& reference_proportions() const { return reference_; }

  void set_iteration(std::uint64_t it) { iteration_ = it; }

  /// One iteration: learning-rate schedule, batch draw, three phases.
  StepDiagnostics step() {
    const auto per_epoch = iterations_per_epoch();
    const auto in_epoch = iteration_ % per_epoch;
    if (in_epoch == 0) {
      std::iota(order_.begin(), order_.end(), Eigen::Index{0});
      std::shuffle(order_.begin(), order_.end(), rng_);
    }
    const auto m = static_cast<Eigen::Index>(cfg_.hp.batch_size);
    Matrix x(m, dataset_.cols());
    for (Eigen::Index i = 0; i < m; ++i) x.row(i) = dataset_.row(order_[in_epoch * m + i]);
    const Matrix z = sample_prior(cfg_.hp.latent_dim, cfg_.hp.batch_size, rng_);

    for (AdamState* s : {&model_.ae_opt, &model_.d_opt, &model_.g_opt}) {
      decay_lr(*s, iteration_, cfg_.hp.lr_decay_every, cfg_.hp.lr_decay_base);
    }
    auto diag = train_step(model_, x, z, cfg_.hp, rng_);
    ++iteration_;
    return diag;
  }

  /// Mode report of `eval_samples` generated points. Uses its own fixed stream so the
  /// same generator always yields the same report.
  std::optional<ModeReport> evaluate() const {
    if (!cfg_.mixture) return std::nullopt;
    return evaluate_generator(model_.generator, *cfg_.mixture, cfg_.hp, cfg_.eval_samples, reference_);
  }

  static ModeReport evaluate_generator(const Mlp& generator, const GaussianMixtureSpec& mixture, const HyperParams& hp,
                                       std::size_t samples, std::span<const double> reference) {
    Rng eval_rng(hp.seed ^ kEvalSeedMask);
    const Matrix z = sample_prior(hp.latent_dim, samples, eval_rng);
    return mode_report(gngan::evaluate(generator, z), mixture, reference, hp.seed);
  }

  /// Runs to completion, reporting rows every `log_every` iterations, at every
  /// evaluation point and at the end.
  void run(const RowCallback& on_row = {}) {
    const auto total = total_iterations();
    while (iteration_ < total) {
      const auto diag = step();
      const bool last = iteration_ == total;
      const bool eval_now = last || (cfg_.eval_every > 0 && iteration_ % cfg_.eval_every == 0);
      const bool log_now = eval_now || (cfg_.log_every > 0 && iteration_ % cfg_.log_every == 0);
      if (!log_now) continue;
      MetricsRow row{iteration_, diag, model_.g_opt.lr, std::nullopt};
      if (eval_now) row.report = evaluate();
      if (on_row) on_row(row);
    }
  }

private:
  TrainConfig cfg_;
  Matrix dataset_;
  std::vector<double> reference_;
  GnGanModel model_;
  Rng rng_;
  std::vector<Eigen::Index> order_;
  std::uint64_t iteration_ = 0;
};

struct TrainResult {
  GnGanModel model;
  std::vector<MetricsRow> log;
  std::optional<ModeReport> final_report;
  std::uint64_t iterations = 0;
};

inline TrainResult train(const TrainConfig& cfg) {
  Trainer t(cfg);
  TrainResult r;
  t.run([&](const MetricsRow& row) { r.log.push_back(row); });
  r.final_report = t.evaluate();
  r.iterations = t.iteration();
  r.model = t.model();
  return r;
}

}  // namespace gngan
