#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gngan/autodiff.hpp"
#include "gngan/error.hpp"
#include "gngan/matrix.hpp"

namespace gngan {

using Rng = std::mt19937_64;

enum class Activation : std::uint8_t { none = 0, relu = 1, sigmoid = 2 };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "<unknown>";
}

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::none;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
  Activation activation = Activation::none;
};

/// Dense feed-forward network. Serves as encoder, generator and discriminator.
struct Mlp {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t out_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
      out.push_back({static_cast<std::size_t>(l.weight.cols()), static_cast<std::size_t>(l.weight.rows()), l.activation});
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Parameters in the canonical order W0, b0, W1, b1, ...
  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

inline void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ValueError("network needs at least one layer");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (specs[k].in_dim < 1 || specs[k].out_dim < 1) {
      throw ValueError("layer " + std::to_string(k) + ": dimensions must be >= 1");
    }
    if (k > 0 && specs[k - 1].out_dim != specs[k].in_dim) {
      throw ValueError("layer " + std::to_string(k) + ": in_dim " + std::to_string(specs[k].in_dim) +
                       " does not match previous out_dim " + std::to_string(specs[k - 1].out_dim));
    }
  }
}

/// Glorot-uniform weights, zero biases.
inline Mlp init_mlp(std::span<const LayerSpec> specs, Rng& rng) {
  validate_specs(specs);
  Mlp net;
  for (const auto& s : specs) {
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer l;
    l.weight.resize(static_cast<Eigen::Index>(s.out_dim), static_cast<Eigen::Index>(s.in_dim));
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = dist(rng);
    l.bias = Matrix::Zero(1, static_cast<Eigen::Index>(s.out_dim));
    l.activation = s.activation;
    net.layers.push_back(std::move(l));
  }
  return net;
}

inline Mlp init_mlp(std::initializer_list<LayerSpec> specs, Rng& rng) {
  return init_mlp(std::span<const LayerSpec>(specs.begin(), specs.size()), rng);
}

/// Fully connected stack: `hidden_layers` ReLU layers of width `hidden`, then `out` with `head`.
inline std::vector<LayerSpec> mlp_specs(std::size_t in, std::size_t out, std::size_t hidden_layers,
                                        std::size_t hidden, Activation head) {
  std::vector<LayerSpec> specs;
  std::size_t prev = in;
  for (std::size_t k = 0; k < hidden_layers; ++k) {
    specs.push_back({prev, hidden, Activation::relu});
    prev = hidden;
  }
  specs.push_back({prev, out, head});
  return specs;
}

/// Network parameters placed on a graph as leaves.
struct BoundMlp {
  const Mlp* net = nullptr;
  std::vector<autodiff::NodeId> params;  // W0, b0, W1, b1, ...
};

inline BoundMlp bind(const Mlp& net, autodiff::Graph& graph, bool trainable) {
  BoundMlp b{&net, {}};
  for (const auto* p : net.parameters()) b.params.push_back(graph.leaf(*p, trainable));
  return b;
}

inline autodiff::NodeId forward(const BoundMlp& bound, autodiff::NodeId x, autodiff::Graph& graph) {
  const Mlp& net = *bound.net;
  if (static_cast<std::size_t>(graph.value(x).cols()) != net.in_dim()) {
    throw ShapeError("forward: input has " + std::to_string(graph.value(x).cols()) + " columns, network expects " +
                     std::to_string(net.in_dim()));
  }
  autodiff::NodeId h = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto w = bound.params[2 * k];
    const auto b = bound.params[2 * k + 1];
    h = graph.add_row_broadcast(graph.matmul(h, graph.transpose(w)), b);
    switch (net.layers[k].activation) {
      case Activation::relu: h = graph.relu(h); break;
      case Activation::sigmoid: h = graph.sigmoid(h); break;
      case Activation::none: break;
    }
  }
  return h;
}

/// Forward with the parameters as non-trainable constants.
inline autodiff::NodeId forward(const Mlp& net, autodiff::NodeId x, autodiff::Graph& graph) {
  return forward(bind(net, graph, false), x, graph);
}

/// Plain evaluation without a graph.
inline Matrix evaluate(const Mlp& net, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != net.in_dim()) {
    throw ShapeError("evaluate: input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(net.in_dim()));
  }
  Matrix h = x;
  for (const auto& l : net.layers) {
    Matrix next(h.rows(), l.weight.rows());
    next.noalias() = h * l.weight.transpose();
    next.rowwise() += l.bias.row(0);
    switch (l.activation) {
      case Activation::relu: next = next.cwiseMax(0.0); break;
      case Activation::sigmoid: next = (1.0 + (-next.array()).exp()).inverse().matrix(); break;
      case Activation::none: break;
    }
    h = std::move(next);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

inline AdamState make_adam(std::span<const Matrix* const> params, double lr, double beta1, double beta2,
                           double epsilon = 1e-8) {
  if (!(lr >= 0.0)) throw ValueError("adam: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValueError("adam: betas must lie in [0, 1)");
  }
  AdamState s;
  s.lr = s.base_lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const Matrix* p : params) {
    s.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

/// One bias-corrected Adam update. `source` names the loss in error messages.
/// A non-finite gradient throws before anything is modified.
inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
                      std::string_view source = "loss") {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
      throw ShapeError("adam_step: gradient " + std::to_string(i) + " has shape " + shape_string(grads[i]) +
                       ", parameter is " + shape_string(*params[i]));
    }
    if (!grads[i].allFinite()) {
      throw NumericError("non-finite gradient from " + std::string(source));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    const auto g = grads[i].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    params[i]->array() -= state.lr * (m / c1) / ((v / c2).sqrt() + state.epsilon);
  }
}

inline double decayed_lr(double base_lr, std::uint64_t step, std::uint64_t every, double base) {
  if (every == 0) return base_lr;
  return base_lr * std::pow(base, static_cast<double>(step / every));
}

/// Staircase decay: lr = base_lr * base^floor(step / every).
inline void decay_lr(AdamState& state, std::uint64_t step, std::uint64_t every = 10000, double base = 0.99) {
  state.lr = decayed_lr(state.base_lr, step, every, base);
}

}  // namespace gngan
