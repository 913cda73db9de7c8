#pragma once

// Define-by-run reverse-mode automatic differentiation over dense matrices.
//
// Every operation registers its vector-Jacobian product in terms of the same
// operation set, so the adjoint of a graph is appended to the graph as ordinary
// nodes and `grad_as_graph` returns a node that `backward` can differentiate again.

#include <array>
#include <compare>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gngan/error.hpp"
#include "gngan/matrix.hpp"

namespace gngan::autodiff {

enum class Op : std::uint8_t {
  leaf,
  matmul,
  add,
  add_row_broadcast,
  sub,
  mul_elementwise,
  scalar_mul,
  add_scalar,
  relu,
  sigmoid,
  square,
  abs,
  sqrt,
  reciprocal,
  log,
  clamp,
  sum_all,
  mean_all,
  sum_rows,
  sum_cols,
  row_l2_norm,
  rowwise_dot,
  transpose,
  broadcast_rows,
  broadcast_cols,
  broadcast_scalar,
  concat_rows,
  slice_rows,
  pad_rows,
};

inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::pad_rows) + 1;

/// Offset inside `row_l2_norm`'s square root; keeps the derivative finite at the origin.
inline constexpr double kNormEpsilon = 1e-12;

inline std::string_view op_name(Op op) {
  static constexpr std::array<std::string_view, kOpCount> names = {
      "leaf",       "matmul",      "add",        "add_row_broadcast", "sub",
      "mul_elementwise", "scalar_mul", "add_scalar", "relu",         "sigmoid",
      "square",     "abs",         "sqrt",       "reciprocal",        "log",
      "clamp",      "sum_all",     "mean_all",   "sum_rows",          "sum_cols",
      "row_l2_norm", "rowwise_dot", "transpose", "broadcast_rows",    "broadcast_cols",
      "broadcast_scalar", "concat_rows", "slice_rows", "pad_rows"};
  const auto i = static_cast<std::size_t>(op);
  return i < kOpCount ? names[i] : std::string_view{"<unknown>"};
}

struct NodeId {
  std::uint32_t index = 0;
  friend auto operator<=>(NodeId, NodeId) = default;
};

/// Scalar and integer attributes for the parameterised ops.
///   scalar_mul / add_scalar: `scalar`
///   clamp: `lo`, `hi`
///   slice_rows: `offset`, `count`;  pad_rows: `offset`, `count` = total rows
///   broadcast_rows: `count` rows;  broadcast_cols: `count` cols
///   broadcast_scalar: `count` rows, `count2` cols
struct OpParams {
  double scalar = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  Eigen::Index offset = 0;
  Eigen::Index count = 0;
  Eigen::Index count2 = 0;
};

struct Node {
  Op op = Op::leaf;
  std::uint8_t arity = 0;
  std::array<NodeId, 2> parents{};
  OpParams params{};
  bool requires_grad = false;
  Matrix value;
};

/// Gradients of a scalar with respect to the requires_grad leaves it reaches.
class Gradients {
public:
  bool contains(NodeId id) const { return grads_.contains(id.index); }
  const Matrix& at(NodeId id) const {
    auto it = grads_.find(id.index);
    if (it == grads_.end()) throw ValueError("no gradient recorded for node " + std::to_string(id.index));
    return it->second;
  }
  std::size_t size() const { return grads_.size(); }
  bool empty() const { return grads_.empty(); }
  void insert(NodeId id, Matrix g) { grads_.insert_or_assign(id.index, std::move(g)); }

private:
  std::unordered_map<std::uint32_t, Matrix> grads_;
};

class Graph {
public:
  Graph() { nodes_.reserve(256); }

  NodeId leaf(Matrix value, bool requires_grad = false) {
    if (value.size() == 0) throw ShapeError("leaf: empty matrix");
    if (!value.allFinite()) throw NumericError("leaf: non-finite value");
    Node n;
    n.op = Op::leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
  }
  NodeId constant(Matrix value) { return leaf(std::move(value), false); }

  /// Appends `op` applied to `inputs` and evaluates it eagerly.
  NodeId apply(Op op, std::span<const NodeId> inputs, const OpParams& params = {});

  NodeId apply(Op op, std::initializer_list<NodeId> inputs, const OpParams& params = {}) {
    return apply(op, std::span<const NodeId>(inputs.begin(), inputs.size()), params);
  }

  NodeId matmul(NodeId a, NodeId b) { return apply(Op::matmul, {a, b}); }
  NodeId add(NodeId a, NodeId b) { return apply(Op::add, {a, b}); }
  NodeId add_row_broadcast(NodeId a, NodeId row) { return apply(Op::add_row_broadcast, {a, row}); }
  NodeId sub(NodeId a, NodeId b) { return apply(Op::sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return apply(Op::mul_elementwise, {a, b}); }
  NodeId scalar_mul(NodeId a, double c) { return apply(Op::scalar_mul, {a}, OpParams{.scalar = c}); }
  NodeId add_scalar(NodeId a, double c) { return apply(Op::add_scalar, {a}, OpParams{.scalar = c}); }
  NodeId relu(NodeId a) { return apply(Op::relu, {a}); }
  NodeId sigmoid(NodeId a) { return apply(Op::sigmoid, {a}); }
  NodeId square(NodeId a) { return apply(Op::square, {a}); }
  NodeId abs(NodeId a) { return apply(Op::abs, {a}); }
  NodeId sqrt(NodeId a) { return apply(Op::sqrt, {a}); }
  NodeId reciprocal(NodeId a) { return apply(Op::reciprocal, {a}); }
  NodeId log(NodeId a) { return apply(Op::log, {a}); }
  NodeId clamp(NodeId a, double lo, double hi) {
    return apply(Op::clamp, {a}, OpParams{.lo = lo, .hi = hi});
  }
  NodeId sum_all(NodeId a) { return apply(Op::sum_all, {a}); }
  NodeId mean_all(NodeId a) { return apply(Op::mean_all, {a}); }
  NodeId sum_rows(NodeId a) { return apply(Op::sum_rows, {a}); }
  NodeId sum_cols(NodeId a) { return apply(Op::sum_cols, {a}); }
  NodeId row_l2_norm(NodeId a) { return apply(Op::row_l2_norm, {a}); }
  NodeId rowwise_dot(NodeId a, NodeId b) { return apply(Op::rowwise_dot, {a, b}); }
  NodeId transpose(NodeId a) { return apply(Op::transpose, {a}); }
  NodeId broadcast_rows(NodeId row, Eigen::Index rows) {
    return apply(Op::broadcast_rows, {row}, OpParams{.count = rows});
  }
  NodeId broadcast_cols(NodeId col, Eigen::Index cols) {
    return apply(Op::broadcast_cols, {col}, OpParams{.count = cols});
  }
  NodeId broadcast_scalar(NodeId s, Eigen::Index rows, Eigen::Index cols) {
    return apply(Op::broadcast_scalar, {s}, OpParams{.count = rows, .count2 = cols});
  }
  NodeId concat_rows(NodeId top, NodeId bottom) { return apply(Op::concat_rows, {top, bottom}); }
  NodeId slice_rows(NodeId a, Eigen::Index offset, Eigen::Index count) {
    return apply(Op::slice_rows, {a}, OpParams{.offset = offset, .count = count});
  }
  NodeId pad_rows(NodeId a, Eigen::Index offset, Eigen::Index total) {
    return apply(Op::pad_rows, {a}, OpParams{.offset = offset, .count = total});
  }

  const Matrix& value(NodeId id) const { return node(id).value; }
  double scalar(NodeId id) const {
    const Matrix& v = value(id);
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar: node is " + shape_string(v));
    return v(0, 0);
  }
  const Node& node(NodeId id) const {
    if (id.index >= nodes_.size()) throw ValueError("unknown node " + std::to_string(id.index));
    return nodes_[id.index];
  }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// d(scalar)/d(leaf) for every requires_grad leaf reachable from `scalar`.
  /// The graph is left exactly as it was.
  Gradients backward(NodeId scalar);

  /// Per-row input gradient d(scalar_i)/d(wrt_i) as a new differentiable node.
  /// `scalar` is a column (one score per row) or 1x1.
  NodeId grad_as_graph(NodeId scalar, NodeId wrt);

private:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  NodeId push(Node&& n) {
    if (nodes_.size() >= kNone) throw Error("graph node limit exceeded");
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Matrix evaluate(Op op, std::span<const NodeId> in, const OpParams& p) const;

  // Reverse sweep from `root`, appending adjoint nodes. Only nodes flagged in
  // `relevant` receive adjoints. Returns the adjoint node index per node (kNone if absent).
  std::vector<std::uint32_t> build_adjoints(NodeId root, NodeId seed, const std::vector<char>& relevant);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------

namespace detail {

inline void require_arity(Op op, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ValueError(std::string(op_name(op)) + ": expected " + std::to_string(want) + " inputs, got " +
                     std::to_string(got));
  }
}

inline void require_same_shape(Op op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

inline std::size_t arity_of(Op op) {
  switch (op) {
    case Op::matmul:
    case Op::add:
    case Op::add_row_broadcast:
    case Op::sub:
    case Op::mul_elementwise:
    case Op::rowwise_dot:
    case Op::concat_rows:
      return 2;
    case Op::leaf:
      return 0;
    default:
      return 1;
  }
}

}  // namespace detail

inline Matrix Graph::evaluate(Op op, std::span<const NodeId> in, const OpParams& p) const {
  using detail::require_same_shape;
  const Matrix& a = value(in[0]);
  const Matrix* b = in.size() > 1 ? &value(in[1]) : nullptr;
  const std::string name(op_name(op));
  switch (op) {
    case Op::matmul: {
      if (a.cols() != b->rows()) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(a) + " x " + shape_string(*b));
      }
      Matrix r(a.rows(), b->cols());
      r.noalias() = a * *b;
      return r;
    }
    case Op::add:
      require_same_shape(op, a, *b);
      return a + *b;
    case Op::add_row_broadcast:
      if (b->rows() != 1 || b->cols() != a.cols()) {
        throw ShapeError("add_row_broadcast: row " + shape_string(*b) + " does not fit " + shape_string(a));
      }
      return a.rowwise() + b->row(0);
    case Op::sub:
      require_same_shape(op, a, *b);
      return a - *b;
    case Op::mul_elementwise:
      require_same_shape(op, a, *b);
      return a.cwiseProduct(*b);
    case Op::scalar_mul:
      return a * p.scalar;
    case Op::add_scalar:
      return a.array() + p.scalar;
    case Op::relu:
      return a.cwiseMax(0.0);
    case Op::sigmoid:
      return (1.0 + (-a.array()).exp()).inverse().matrix();
    case Op::square:
      return a.array().square().matrix();
    case Op::abs:
      return a.cwiseAbs();
    case Op::sqrt:
      if ((a.array() < 0.0).any()) throw NumericError("sqrt: negative argument");
      return a.cwiseSqrt();
    case Op::reciprocal:
      if ((a.array() == 0.0).any()) throw NumericError("reciprocal: zero argument");
      return a.cwiseInverse();
    case Op::log:
      if ((a.array() <= 0.0).any()) throw NumericError("log: non-positive argument");
      return a.array().log().matrix();
    case Op::clamp:
      if (!(p.lo <= p.hi)) throw ValueError("clamp: lo > hi");
      return a.cwiseMax(p.lo).cwiseMin(p.hi);
    case Op::sum_all: {
      Matrix r(1, 1);
      r(0, 0) = a.sum();
      return r;
    }
    case Op::mean_all: {
      Matrix r(1, 1);
      r(0, 0) = a.mean();
      return r;
    }
    case Op::sum_rows:
      return a.colwise().sum();
    case Op::sum_cols:
      return a.rowwise().sum();
    case Op::row_l2_norm:
      return (a.rowwise().squaredNorm().array() + kNormEpsilon).sqrt().matrix();
    case Op::rowwise_dot:
      require_same_shape(op, a, *b);
      return a.cwiseProduct(*b).rowwise().sum();
    case Op::transpose:
      return a.transpose();
    case Op::broadcast_rows:
      if (a.rows() != 1 || p.count < 1) throw ShapeError("broadcast_rows: input must be 1xc, count >= 1");
      return a.replicate(p.count, 1);
    case Op::broadcast_cols:
      if (a.cols() != 1 || p.count < 1) throw ShapeError("broadcast_cols: input must be nx1, count >= 1");
      return a.replicate(1, p.count);
    case Op::broadcast_scalar:
      if (a.rows() != 1 || a.cols() != 1 || p.count < 1 || p.count2 < 1) {
        throw ShapeError("broadcast_scalar: input must be 1x1 with positive target shape");
      }
      return Matrix::Constant(p.count, p.count2, a(0, 0));
    case Op::concat_rows: {
      if (a.cols() != b->cols()) {
        throw ShapeError("concat_rows: column mismatch " + shape_string(a) + " vs " + shape_string(*b));
      }
      Matrix r(a.rows() + b->rows(), a.cols());
      r.topRows(a.rows()) = a;
      r.bottomRows(b->rows()) = *b;
      return r;
    }
    case Op::slice_rows:
      if (p.offset < 0 || p.count < 1 || p.offset + p.count > a.rows()) {
        throw ShapeError("slice_rows: range out of bounds for " + shape_string(a));
      }
      return a.middleRows(p.offset, p.count);
    case Op::pad_rows: {
      if (p.offset < 0 || p.offset + a.rows() > p.count) {
        throw ShapeError("pad_rows: block does not fit in " + std::to_string(p.count) + " rows");
      }
      Matrix r = Matrix::Zero(p.count, a.cols());
      r.middleRows(p.offset, a.rows()) = a;
      return r;
    }
    case Op::leaf:
      break;
  }
  throw ValueError("apply: unknown op tag " + std::to_string(static_cast<int>(op)));
}

inline NodeId Graph::apply(Op op, std::span<const NodeId> inputs, const OpParams& params) {
  if (static_cast<std::size_t>(op) >= kOpCount || op == Op::leaf) {
    throw ValueError("apply: unknown op tag " + std::to_string(static_cast<int>(op)));
  }
  detail::require_arity(op, inputs.size(), detail::arity_of(op));
  for (NodeId id : inputs) (void)node(id);

  Node n;
  n.op = op;
  n.arity = static_cast<std::uint8_t>(inputs.size());
  n.params = params;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    n.parents[i] = inputs[i];
    n.requires_grad = n.requires_grad || nodes_[inputs[i].index].requires_grad;
  }
  n.value = evaluate(op, inputs, params);
  if (!std::isfinite(n.value.sum())) {
    throw NumericError(std::string(op_name(op)) + ": produced a non-finite value");
  }
  return push(std::move(n));
}

inline std::vector<std::uint32_t> Graph::build_adjoints(NodeId root, NodeId seed,
                                                       const std::vector<char>& relevant) {
  std::vector<std::uint32_t> adj(root.index + 1, kNone);
  adj[root.index] = seed.index;

  auto accumulate = [&](NodeId parent, NodeId contribution) {
    auto& slot = adj[parent.index];
    slot = slot == kNone ? contribution.index : add(NodeId{slot}, contribution).index;
  };

  for (std::uint32_t k = root.index + 1; k-- > 0;) {
    if (adj[k] == kNone || !relevant[k]) continue;
    // Copy what we need: appending nodes below may reallocate `nodes_`.
    const Op op = nodes_[k].op;
    if (op == Op::leaf) continue;
    const std::uint8_t arity = nodes_[k].arity;
    const std::array<NodeId, 2> par = nodes_[k].parents;
    const OpParams prm = nodes_[k].params;
    const NodeId self{k};
    const NodeId g{adj[k]};
    auto wants = [&](int i) { return i < arity && relevant[par[i].index]; };

    switch (op) {
      case Op::matmul:
        if (wants(0)) accumulate(par[0], matmul(g, transpose(par[1])));
        if (wants(1)) accumulate(par[1], matmul(transpose(par[0]), g));
        break;
      case Op::add:
        if (wants(0)) accumulate(par[0], g);
        if (wants(1)) accumulate(par[1], g);
        break;
      case Op::add_row_broadcast:
        if (wants(0)) accumulate(par[0], g);
        if (wants(1)) accumulate(par[1], sum_rows(g));
        break;
      case Op::sub:
        if (wants(0)) accumulate(par[0], g);
        if (wants(1)) accumulate(par[1], scalar_mul(g, -1.0));
        break;
      case Op::mul_elementwise:
        if (wants(0)) accumulate(par[0], mul(g, par[1]));
        if (wants(1)) accumulate(par[1], mul(g, par[0]));
        break;
      case Op::scalar_mul:
        accumulate(par[0], scalar_mul(g, prm.scalar));
        break;
      case Op::add_scalar:
        accumulate(par[0], g);
        break;
      case Op::relu: {
        // Subgradient 0 at the kink.
        Matrix mask = (value(par[0]).array() > 0.0).cast<double>().matrix();
        accumulate(par[0], mul(g, constant(std::move(mask))));
        break;
      }
      case Op::sigmoid:
        accumulate(par[0], mul(g, sub(self, square(self))));
        break;
      case Op::square:
        accumulate(par[0], mul(g, scalar_mul(par[0], 2.0)));
        break;
      case Op::abs: {
        Matrix sign = value(par[0]).array().sign().matrix();
        accumulate(par[0], mul(g, constant(std::move(sign))));
        break;
      }
      case Op::sqrt: {
        // Derivative taken as 0 where the root is 0; `shift` keeps the reciprocal finite there.
        const Matrix& y = value(self);
        Matrix live = (y.array() > 0.0).cast<double>().matrix();
        Matrix shift = (y.array() == 0.0).cast<double>().matrix();
        const auto inv = reciprocal(add(self, constant(std::move(shift))));
        accumulate(par[0], mul(g, mul(scalar_mul(inv, 0.5), constant(std::move(live)))));
        break;
      }
      case Op::reciprocal:
        accumulate(par[0], mul(g, scalar_mul(square(self), -1.0)));
        break;
      case Op::log:
        accumulate(par[0], mul(g, reciprocal(par[0])));
        break;
      case Op::clamp: {
        const Matrix& x = value(par[0]);
        Matrix inside = ((x.array() >= prm.lo) && (x.array() <= prm.hi)).cast<double>().matrix();
        accumulate(par[0], mul(g, constant(std::move(inside))));
        break;
      }
      case Op::sum_all: {
        const auto r = value(par[0]).rows(), c = value(par[0]).cols();
        accumulate(par[0], broadcast_scalar(g, r, c));
        break;
      }
      case Op::mean_all: {
        const auto r = value(par[0]).rows(), c = value(par[0]).cols();
        accumulate(par[0], broadcast_scalar(scalar_mul(g, 1.0 / static_cast<double>(r * c)), r, c));
        break;
      }
      case Op::sum_rows:
        accumulate(par[0], broadcast_rows(g, value(par[0]).rows()));
        break;
      case Op::sum_cols:
        accumulate(par[0], broadcast_cols(g, value(par[0]).cols()));
        break;
      case Op::row_l2_norm: {
        const auto c = value(par[0]).cols();
        accumulate(par[0], mul(broadcast_cols(mul(g, reciprocal(self)), c), par[0]));
        break;
      }
      case Op::rowwise_dot: {
        const auto c = value(par[0]).cols();
        if (wants(0) || wants(1)) {
          const NodeId gb = broadcast_cols(g, c);
          if (wants(0)) accumulate(par[0], mul(gb, par[1]));
          if (wants(1)) accumulate(par[1], mul(gb, par[0]));
        }
        break;
      }
      case Op::transpose:
        accumulate(par[0], transpose(g));
        break;
      case Op::broadcast_rows:
        accumulate(par[0], sum_rows(g));
        break;
      case Op::broadcast_cols:
        accumulate(par[0], sum_cols(g));
        break;
      case Op::broadcast_scalar:
        accumulate(par[0], sum_all(g));
        break;
      case Op::concat_rows: {
        const auto top = value(par[0]).rows(), bottom = value(par[1]).rows();
        if (wants(0)) accumulate(par[0], slice_rows(g, 0, top));
        if (wants(1)) accumulate(par[1], slice_rows(g, top, bottom));
        break;
      }
      case Op::slice_rows:
        accumulate(par[0], pad_rows(g, prm.offset, value(par[0]).rows()));
        break;
      case Op::pad_rows:
        accumulate(par[0], slice_rows(g, prm.offset, value(par[0]).rows()));
        break;
      case Op::leaf:
        break;
    }
  }
  return adj;
}

inline Gradients Graph::backward(NodeId scalar) {
  const Matrix& root = value(scalar);
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be 1x1, got " + shape_string(root));
  }
  Gradients out;
  if (!nodes_[scalar.index].requires_grad) return out;

  const std::size_t mark = nodes_.size();
  std::vector<char> relevant(scalar.index + 1);
  for (std::uint32_t k = 0; k <= scalar.index; ++k) relevant[k] = nodes_[k].requires_grad ? 1 : 0;

  const NodeId seed = constant(Matrix::Ones(1, 1));
  const auto adj = build_adjoints(scalar, seed, relevant);
  for (std::uint32_t k = 0; k <= scalar.index; ++k) {
    if (adj[k] != kNone && nodes_[k].op == Op::leaf && nodes_[k].requires_grad) {
      out.insert(NodeId{k}, nodes_[adj[k]].value);
    }
  }
  nodes_.resize(mark);
  return out;
}

inline NodeId Graph::grad_as_graph(NodeId scalar, NodeId wrt) {
  const Matrix& s = value(scalar);
  (void)node(wrt);
  if (s.cols() != 1) throw ShapeError("grad_as_graph: scores must be a column, got " + shape_string(s));
  if (wrt.index > scalar.index) throw ValueError("grad_as_graph: wrt is not an ancestor of the scores");

  // Nodes that depend on `wrt`.
  std::vector<char> relevant(scalar.index + 1, 0);
  relevant[wrt.index] = 1;
  for (std::uint32_t k = wrt.index + 1; k <= scalar.index; ++k) {
    const Node& n = nodes_[k];
    for (std::uint8_t i = 0; i < n.arity; ++i) {
      if (relevant[n.parents[i].index]) {
        relevant[k] = 1;
        break;
      }
    }
  }
  if (!relevant[scalar.index]) throw ValueError("grad_as_graph: wrt is not an ancestor of the scores");

  const NodeId seed = constant(Matrix::Ones(s.rows(), 1));
  const auto adj = build_adjoints(scalar, seed, relevant);
  if (adj[wrt.index] == kNone) throw ValueError("grad_as_graph: wrt is not an ancestor of the scores");
  return NodeId{adj[wrt.index]};
}

}  // namespace gngan::autodiff
