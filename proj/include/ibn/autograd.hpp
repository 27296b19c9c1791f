#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibn/errors.hpp"
#include "ibn/nn/activation.hpp"
#include "ibn/tensor.hpp"

namespace ibn::autograd {

using NodeId = std::uint32_t;

enum class Op {
  input,
  parameter,
  constant,
  matmul,
  add,
  add_row,
  activation,
  softmax_rows,
  mse,
  scale,
  transpose,
  concat_cols,
  mask_add,
  layer_norm,
  embed_lookup,
  select_rows,
  cross_entropy,
};

inline const char* op_name(Op op) {
  switch (op) {
  case Op::input: return "input";
  case Op::parameter: return "parameter";
  case Op::constant: return "constant";
  case Op::matmul: return "matmul";
  case Op::add: return "add";
  case Op::add_row: return "add-row";
  case Op::activation: return "activation";
  case Op::softmax_rows: return "softmax-rows";
  case Op::mse: return "mse";
  case Op::scale: return "scale";
  case Op::transpose: return "transpose";
  case Op::concat_cols: return "concat-cols";
  case Op::mask_add: return "mask-add";
  case Op::layer_norm: return "layer-norm";
  case Op::embed_lookup: return "embed-lookup";
  case Op::select_rows: return "select-rows";
  case Op::cross_entropy: return "cross-entropy";
  }
  return "?";
}

/// Target index ignored by cross_entropy.
inline constexpr int kIgnoreIndex = -1;

/// Define-by-run computation tape.
///
/// Nodes are appended in topological order; parents always precede children.
/// Recording is lazy: values are produced by forward(), which can be replayed
/// with new named inputs or after parameter matrices have been modified in
/// place. Parameter nodes alias caller-owned matrices, which must outlive the
/// tape and must not be mutated concurrently with forward/backward.
class Tape {
public:
  struct Node {
    Op op = Op::input;
    std::vector<NodeId> parents;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool trainable = false;
    bool has_value = false; // inputs only

    std::string name;
    Matrix* source = nullptr;
    nn::ActivationKind activation{};
    double scalar = 0.0;
    std::vector<int> indices;
    std::shared_ptr<const Matrix> constant;
    std::size_t rows_hint = 0, cols_hint = 0;

    Matrix cache;
    std::vector<double> row_cache;
  };

  // -- leaves ---------------------------------------------------------------

  /// Named input with an initial value; forward(inputs) may replace it with a
  /// matrix of the same shape.
  NodeId input(std::string name, Matrix value) {
    Node n;
    n.op = Op::input;
    n.name = std::move(name);
    n.rows_hint = value.rows();
    n.cols_hint = value.cols();
    n.value = std::move(value);
    n.has_value = true;
    return push(std::move(n));
  }

  /// Named input declared by shape only; its value must be supplied to forward.
  NodeId input(std::string name, std::size_t rows, std::size_t cols) {
    Node n;
    n.op = Op::input;
    n.name = std::move(name);
    n.rows_hint = rows;
    n.cols_hint = cols;
    n.value = Matrix(rows, cols);
    return push(std::move(n));
  }

  NodeId constant(Matrix value) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(value);
    return push(std::move(n));
  }

  /// Leaf aliasing `m`. Registering the same matrix twice returns the first
  /// node, keeping its trainable flag.
  NodeId parameter(Matrix& m, bool trainable = true) {
    if (auto it = param_index_.find(&m); it != param_index_.end())
      return it->second;
    Node n;
    n.op = Op::parameter;
    n.source = &m;
    n.trainable = trainable;
    n.requires_grad = trainable;
    const NodeId id = push(std::move(n));
    param_index_.emplace(&m, id);
    return id;
  }

  /// Non-trainable leaf aliasing `m`; the tape never writes through it.
  NodeId frozen(const Matrix& m) { return parameter(const_cast<Matrix&>(m), false); }

  /// Binds a model parameter as trainable or frozen.
  NodeId bind(const Matrix& m, bool trainable) {
    return trainable ? parameter(const_cast<Matrix&>(m), true) : frozen(m);
  }

  // -- operations -----------------------------------------------------------

  NodeId matmul(NodeId a, NodeId b) { return op(Op::matmul, {a, b}); }
  NodeId add(NodeId a, NodeId b) { return op(Op::add, {a, b}); }
  NodeId add_row(NodeId a, NodeId bias) { return op(Op::add_row, {a, bias}); }
  NodeId transpose(NodeId a) { return op(Op::transpose, {a}); }
  NodeId softmax_rows(NodeId a) { return op(Op::softmax_rows, {a}); }

  NodeId activation(NodeId a, nn::ActivationKind kind) {
    Node n = make(Op::activation, {a});
    n.activation = kind;
    return push(std::move(n));
  }

  NodeId scale(NodeId a, double factor) {
    Node n = make(Op::scale, {a});
    n.scalar = factor;
    return push(std::move(n));
  }

  /// (1 / 2n) * sum of squared differences, n = number of rows.
  NodeId mse(NodeId pred, NodeId target) { return op(Op::mse, {pred, target}); }

  NodeId concat_cols(std::span<const NodeId> parts) {
    if (parts.empty())
      throw ValidationError("concat_cols needs at least one operand");
    return op(Op::concat_cols, std::vector<NodeId>(parts.begin(), parts.end()));
  }

  /// Adds a fixed matrix (e.g. an attention mask of 0 / -1e9 entries).
  NodeId mask_add(NodeId a, std::shared_ptr<const Matrix> mask) {
    Node n = make(Op::mask_add, {a});
    n.constant = std::move(mask);
    return push(std::move(n));
  }

  /// Per-row normalisation followed by gamma scale and beta shift.
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    if (!(eps > 0.0))
      throw ValidationError("layer_norm eps must be positive");
    Node n = make(Op::layer_norm, {x, gamma, beta});
    n.scalar = eps;
    return push(std::move(n));
  }

  /// Row i of the result is row ids[i] of `table`.
  NodeId embed_lookup(NodeId table, std::vector<int> ids) {
    if (ids.empty())
      throw ValidationError("embed_lookup needs at least one id");
    Node n = make(Op::embed_lookup, {table});
    n.indices = std::move(ids);
    return push(std::move(n));
  }

  NodeId select_rows(NodeId a, std::vector<int> rows) {
    if (rows.empty())
      throw ValidationError("select_rows needs at least one row");
    Node n = make(Op::select_rows, {a});
    n.indices = std::move(rows);
    return push(std::move(n));
  }

  /// Mean softmax cross-entropy over rows whose target is not kIgnoreIndex.
  /// Evaluates to 0 when every row is ignored.
  NodeId cross_entropy(NodeId logits, std::vector<int> targets) {
    Node n = make(Op::cross_entropy, {logits});
    n.indices = std::move(targets);
    return push(std::move(n));
  }

  // -- evaluation -----------------------------------------------------------

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  NodeId output() const {
    if (nodes_.empty())
      throw StateError("tape is empty");
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  const Matrix& value(NodeId id) const {
    const Node& n = nodes_.at(id);
    return n.op == Op::parameter ? *n.source : n.value;
  }

  const Matrix& grad(NodeId id) const {
    if (!backward_done_)
      throw StateError("gradients requested before backward");
    return nodes_.at(id).grad;
  }

  Matrix& parameter_source(NodeId id) {
    Node& n = nodes_.at(id);
    if (n.op != Op::parameter || !n.trainable)
      throw ValidationError("node " + std::to_string(id) + " is not a trainable parameter");
    return *n.source;
  }

  std::vector<NodeId> trainable() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::parameter && nodes_[i].trainable)
        out.push_back(i);
    return out;
  }

  bool evaluated() const noexcept { return evaluated_; }

  /// Evaluates every node in tape order and returns the final value.
  const Matrix& forward() {
    for (NodeId i = 0; i < nodes_.size(); ++i)
      evaluate(i);
    evaluated_ = true;
    backward_done_ = false;
    return value(output());
  }

  /// Replaces named inputs, then evaluates. Every declared input must be
  /// supplied or already carry a value, with the declared shape.
  const Matrix& forward(const std::map<std::string, Matrix>& inputs) {
    for (const auto& [name, m] : inputs) {
      bool found = false;
      for (NodeId i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (n.op != Op::input || n.name != name)
          continue;
        found = true;
        if (m.rows() != n.rows_hint || m.cols() != n.cols_hint)
          throw ShapeError(where(i) + ": input '" + name + "' declared " +
                           Matrix::shape_str(n.rows_hint, n.cols_hint) + ", got " + m.shape());
        n.value = m;
        n.has_value = true;
      }
      if (!found)
        throw ValidationError("tape has no input named '" + name + "'");
    }
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::input && !nodes_[i].has_value)
        throw ValidationError(where(i) + ": missing value for input '" + nodes_[i].name + "'");
    return forward();
  }

  /// Reverse-mode sweep from the (1x1) output. Returns d output / d p for every
  /// trainable parameter node p. `seed` is the upstream gradient of the output.
  std::map<NodeId, Matrix> backward(double seed = 1.0) {
    if (!evaluated_)
      throw StateError("backward called before forward");
    const NodeId out = output();
    const Matrix& ov = value(out);
    if (ov.rows() != 1 || ov.cols() != 1)
      throw ShapeError("backward needs a scalar (1x1) output, got " + ov.shape());

    for (NodeId i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.requires_grad) {
        const Matrix& v = value(i);
        if (n.grad.same_shape(v))
          n.grad.fill(0.0);
        else
          n.grad = Matrix(v.rows(), v.cols());
      }
    }
    if (!nodes_[out].requires_grad)
      nodes_[out].grad = Matrix(1, 1);
    nodes_[out].grad(0, 0) = seed;

    for (NodeId i = out + 1; i-- > 0;) {
      if (nodes_[i].requires_grad || i == out)
        propagate(i);
    }
    backward_done_ = true;

    std::map<NodeId, Matrix> grads;
    for (NodeId id : trainable())
      grads.emplace(id, nodes_[id].grad);
    return grads;
  }

private:
  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, NodeId> param_index_;
  bool evaluated_ = false;
  bool backward_done_ = false;

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    backward_done_ = false;
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  Node make(Op kind, std::vector<NodeId> parents) const {
    Node n;
    n.op = kind;
    for (NodeId p : parents) {
      if (p >= nodes_.size())
        throw ValidationError(std::string(op_name(kind)) + ": unknown parent node " +
                              std::to_string(p));
      n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    }
    n.parents = std::move(parents);
    return n;
  }

  NodeId op(Op kind, std::vector<NodeId> parents) { return push(make(kind, std::move(parents))); }

  std::string where(NodeId i) const {
    return "node " + std::to_string(i) + " (" + op_name(nodes_[i].op) + ")";
  }

  [[noreturn]] void shape_fail(NodeId i, const std::string& what) const {
    throw ShapeError(where(i) + ": " + what);
  }

  void evaluate(NodeId i) {
    Node& n = nodes_[i];
    auto in = [&](std::size_t k) -> const Matrix& { return value(n.parents[k]); };
    switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::constant:
      return;
    case Op::matmul: {
      const Matrix &a = in(0), &b = in(1);
      if (a.cols() != b.rows())
        shape_fail(i, "cannot multiply " + a.shape() + " by " + b.shape());
      reset(n.value, a.rows(), b.cols());
      matmul_acc(a, b, n.value);
      return;
    }
    case Op::add: {
      const Matrix &a = in(0), &b = in(1);
      if (!a.same_shape(b))
        shape_fail(i, "cannot add " + a.shape() + " and " + b.shape());
      n.value = a;
      auto o = n.value.data();
      auto d = b.data();
      for (std::size_t k = 0; k < o.size(); ++k)
        o[k] += d[k];
      return;
    }
    case Op::add_row: {
      const Matrix &a = in(0), &b = in(1);
      if (b.rows() != 1 || b.cols() != a.cols())
        shape_fail(i, "bias " + b.shape() + " does not fit " + a.shape());
      n.value = a;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto o = n.value.row_span(r);
        for (std::size_t c = 0; c < a.cols(); ++c)
          o[c] += b(0, c);
      }
      return;
    }
    case Op::activation: {
      n.value = in(0);
      for (double& v : n.value.data())
        v = nn::activate(n.activation, v);
      return;
    }
    case Op::softmax_rows:
      n.value = row_softmax(in(0));
      return;
    case Op::mse: {
      const Matrix &p = in(0), &t = in(1);
      if (!p.same_shape(t))
        shape_fail(i, "prediction " + p.shape() + " vs target " + t.shape());
      double s = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double d = p.data()[k] - t.data()[k];
        s += d * d;
      }
      reset(n.value, 1, 1);
      n.value(0, 0) = s / (2.0 * static_cast<double>(p.rows()));
      return;
    }
    case Op::scale: {
      n.value = in(0);
      for (double& v : n.value.data())
        v *= n.scalar;
      return;
    }
    case Op::transpose:
      n.value = ibn::transpose(in(0));
      return;
    case Op::concat_cols: {
      const std::size_t rows = in(0).rows();
      std::size_t cols = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        if (in(k).rows() != rows)
          shape_fail(i, "row count mismatch " + in(0).shape() + " vs " + in(k).shape());
        cols += in(k).cols();
      }
      reset(n.value, rows, cols);
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const Matrix& part = in(k);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < part.cols(); ++c)
            n.value(r, off + c) = part(r, c);
        off += part.cols();
      }
      return;
    }
    case Op::mask_add: {
      const Matrix& a = in(0);
      if (!a.same_shape(*n.constant))
        shape_fail(i, "mask " + n.constant->shape() + " does not fit " + a.shape());
      n.value = a;
      auto o = n.value.data();
      auto m = n.constant->data();
      for (std::size_t k = 0; k < o.size(); ++k)
        o[k] += m[k];
      return;
    }
    case Op::layer_norm: {
      const Matrix &x = in(0), &g = in(1), &b = in(2);
      const std::size_t d = x.cols();
      if (g.rows() != 1 || g.cols() != d || b.rows() != 1 || b.cols() != d)
        shape_fail(i, "gamma " + g.shape() + " / beta " + b.shape() + " do not fit " + x.shape());
      reset(n.value, x.rows(), d);
      reset(n.cache, x.rows(), d);
      n.row_cache.assign(x.rows(), 0.0);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row_span(r);
        double mean = 0.0;
        for (double v : xr)
          mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xr)
          var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + n.scalar);
        n.row_cache[r] = inv;
        for (std::size_t c = 0; c < d; ++c) {
          const double xh = (xr[c] - mean) * inv;
          n.cache(r, c) = xh;
          n.value(r, c) = xh * g(0, c) + b(0, c);
        }
      }
      return;
    }
    case Op::embed_lookup: {
      const Matrix& table = in(0);
      reset(n.value, n.indices.size(), table.cols());
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        const int id = n.indices[r];
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
          shape_fail(i, "id " + std::to_string(id) + " outside table " + table.shape());
        std::copy_n(table.row_span(static_cast<std::size_t>(id)).begin(), table.cols(),
                    n.value.row_span(r).begin());
      }
      return;
    }
    case Op::select_rows: {
      const Matrix& a = in(0);
      reset(n.value, n.indices.size(), a.cols());
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        const int src = n.indices[r];
        if (src < 0 || static_cast<std::size_t>(src) >= a.rows())
          shape_fail(i, "row " + std::to_string(src) + " outside " + a.shape());
        std::copy_n(a.row_span(static_cast<std::size_t>(src)).begin(), a.cols(),
                    n.value.row_span(r).begin());
      }
      return;
    }
    case Op::cross_entropy: {
      const Matrix& logits = in(0);
      if (n.indices.size() != logits.rows())
        shape_fail(i, std::to_string(n.indices.size()) + " targets for logits " + logits.shape());
      n.cache = row_softmax(logits);
      double loss = 0.0;
      std::size_t count = 0;
      for (std::size_t r = 0; r < logits.rows(); ++r) {
        const int t = n.indices[r];
        if (t == kIgnoreIndex)
          continue;
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols())
          shape_fail(i, "target " + std::to_string(t) + " outside " + logits.shape());
        // log-softmax computed directly for accuracy on confident rows
        auto lr = logits.row_span(r);
        const double mx = *std::max_element(lr.begin(), lr.end());
        double se = 0.0;
        for (double v : lr)
          se += std::exp(v - mx);
        loss += -(lr[static_cast<std::size_t>(t)] - mx - std::log(se));
        ++count;
      }
      reset(n.value, 1, 1);
      n.scalar = static_cast<double>(count);
      n.value(0, 0) = count ? loss / static_cast<double>(count) : 0.0;
      return;
    }
    }
  }

  static void reset(Matrix& m, std::size_t rows, std::size_t cols) {
    if (m.rows() == rows && m.cols() == cols)
      m.fill(0.0);
    else
      m = Matrix(rows, cols);
  }

  Matrix* grad_of(NodeId p) { return nodes_[p].requires_grad ? &nodes_[p].grad : nullptr; }

  void propagate(NodeId i) {
    Node& n = nodes_[i];
    const Matrix& g = n.grad;
    auto in = [&](std::size_t k) -> const Matrix& { return value(n.parents[k]); };
    switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::constant:
      return;
    case Op::matmul: {
      if (Matrix* ga = grad_of(n.parents[0]))
        matmul_nt_acc(g, in(1), *ga);
      if (Matrix* gb = grad_of(n.parents[1]))
        matmul_tn_acc(in(0), g, *gb);
      return;
    }
    case Op::add:
    case Op::mask_add: {
      for (std::size_t k = 0; k < (n.op == Op::add ? 2u : 1u); ++k)
        if (Matrix* ga = grad_of(n.parents[k]))
          accumulate(*ga, g, 1.0);
      return;
    }
    case Op::add_row: {
      if (Matrix* ga = grad_of(n.parents[0]))
        accumulate(*ga, g, 1.0);
      if (Matrix* gb = grad_of(n.parents[1]))
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c)
            (*gb)(0, c) += g(r, c);
      return;
    }
    case Op::activation: {
      if (Matrix* ga = grad_of(n.parents[0])) {
        const Matrix& z = in(0);
        for (std::size_t k = 0; k < z.size(); ++k)
          ga->data()[k] += g.data()[k] * nn::activation_derivative(n.activation, z.data()[k],
                                                                   n.value.data()[k]);
      }
      return;
    }
    case Op::softmax_rows: {
      if (Matrix* ga = grad_of(n.parents[0])) {
        const Matrix& y = n.value;
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c)
            dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c)
            (*ga)(r, c) += y(r, c) * (g(r, c) - dot);
        }
      }
      return;
    }
    case Op::mse: {
      const Matrix &p = in(0), &t = in(1);
      const double f = g(0, 0) / static_cast<double>(p.rows());
      Matrix* gp = grad_of(n.parents[0]);
      Matrix* gt = grad_of(n.parents[1]);
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double d = (p.data()[k] - t.data()[k]) * f;
        if (gp)
          gp->data()[k] += d;
        if (gt)
          gt->data()[k] -= d;
      }
      return;
    }
    case Op::scale: {
      if (Matrix* ga = grad_of(n.parents[0]))
        accumulate(*ga, g, n.scalar);
      return;
    }
    case Op::transpose: {
      if (Matrix* ga = grad_of(n.parents[0]))
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c)
            (*ga)(c, r) += g(r, c);
      return;
    }
    case Op::concat_cols: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const std::size_t w = in(k).cols();
        if (Matrix* ga = grad_of(n.parents[k]))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c)
              (*ga)(r, c) += g(r, off + c);
        off += w;
      }
      return;
    }
    case Op::layer_norm: {
      const Matrix& gamma = in(1);
      const std::size_t d = g.cols();
      const double dd = static_cast<double>(d);
      Matrix* gx = grad_of(n.parents[0]);
      Matrix* gg = grad_of(n.parents[1]);
      Matrix* gb = grad_of(n.parents[2]);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double sum_gh = 0.0, sum_ghx = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double gh = g(r, c) * gamma(0, c);
          sum_gh += gh;
          sum_ghx += gh * n.cache(r, c);
          if (gg)
            (*gg)(0, c) += g(r, c) * n.cache(r, c);
          if (gb)
            (*gb)(0, c) += g(r, c);
        }
        if (gx) {
          const double inv = n.row_cache[r];
          for (std::size_t c = 0; c < d; ++c) {
            const double gh = g(r, c) * gamma(0, c);
            (*gx)(r, c) += inv / dd * (dd * gh - sum_gh - n.cache(r, c) * sum_ghx);
          }
        }
      }
      return;
    }
    case Op::embed_lookup:
    case Op::select_rows: {
      if (Matrix* ga = grad_of(n.parents[0]))
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          auto dst = ga->row_span(static_cast<std::size_t>(n.indices[r]));
          auto src = g.row_span(r);
          for (std::size_t c = 0; c < src.size(); ++c)
            dst[c] += src[c];
        }
      return;
    }
    case Op::cross_entropy: {
      Matrix* ga = grad_of(n.parents[0]);
      if (!ga || n.scalar == 0.0)
        return;
      const double f = g(0, 0) / n.scalar;
      for (std::size_t r = 0; r < n.cache.rows(); ++r) {
        const int t = n.indices[r];
        if (t == kIgnoreIndex)
          continue;
        for (std::size_t c = 0; c < n.cache.cols(); ++c)
          (*ga)(r, c) += f * (n.cache(r, c) - (static_cast<int>(c) == t ? 1.0 : 0.0));
      }
      return;
    }
    }
  }

  static void accumulate(Matrix& dst, const Matrix& src, double f) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t k = 0; k < d.size(); ++k)
      d[k] += f * s[k];
  }
};

/// Largest relative disagreement |a - b| / max(1e-12, |a| + |b|) between
/// backward() and central finite differences, over every trainable entry.
struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  NodeId worst_node = 0;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

inline GradCheckReport grad_check_report(Tape& tape, const std::map<std::string, Matrix>& inputs,
                                         double epsilon) {
  if (!(epsilon >= 1e-8 && epsilon <= 1e-3))
    throw ValidationError("grad_check epsilon must lie in [1e-8, 1e-3]");
  auto run = [&]() -> double {
    return inputs.empty() ? tape.forward()(0, 0) : tape.forward(inputs)(0, 0);
  };
  run();
  const auto analytic = tape.backward();
  GradCheckReport report;
  for (const auto& [id, grad] : analytic) {
    Matrix& p = tape.parameter_source(id);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + epsilon;
      const double plus = run();
      p.data()[k] = saved - epsilon;
      const double minus = run();
      p.data()[k] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = grad.data()[k];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max(1e-12, std::abs(a) + std::abs(numeric));
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_node = id;
        report.worst_index = k;
      }
      ++report.entries_checked;
    }
  }
  run();
  return report;
}

inline double grad_check(Tape& tape, const std::map<std::string, Matrix>& inputs, double epsilon) {
  return grad_check_report(tape, inputs, epsilon).max_relative_error;
}

} // namespace ibn::autograd
