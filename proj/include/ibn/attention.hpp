#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ibn/autograd.hpp"
#include "ibn/errors.hpp"
#include "ibn/nn/activation.hpp"
#include "ibn/nn/layers.hpp"
#include "ibn/rng.hpp"
#include "ibn/tensor.hpp"

namespace ibn::attention {

using autograd::NodeId;
using autograd::Tape;

/// Additive score used for masked positions before the softmax.
inline constexpr double kMaskedScore = -1e9;

struct AttentionMask {
  enum class Kind { none, causal, padding };

  Kind kind = Kind::none;
  std::size_t valid_length = 0; // padding only: keys at index >= valid_length are hidden

  static AttentionMask none() { return {}; }
  static AttentionMask causal() { return {Kind::causal, 0}; }
  static AttentionMask padding(std::size_t valid) { return {Kind::padding, valid}; }

  /// T x T matrix of 0 / kMaskedScore entries, or nullptr when nothing is masked.
  std::shared_ptr<const Matrix> additive(std::size_t t) const {
    if (kind == Kind::none || (kind == Kind::padding && valid_length >= t))
      return nullptr;
    if (kind == Kind::padding && valid_length == 0)
      throw ValidationError("padding mask needs at least one valid position");
    auto m = std::make_shared<Matrix>(t, t);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        const bool hidden = kind == Kind::causal ? j > i : j >= valid_length;
        (*m)(i, j) = hidden ? kMaskedScore : 0.0;
      }
    return m;
  }
};

/// Per-head projections. d_k == d_v == d_e / h.
struct HeadWeights {
  Matrix wq, wk, wv;

  static HeadWeights init(std::size_t d_model, std::size_t d_head, Rng& rng) {
    const double limit = std::sqrt(1.0 / static_cast<double>(d_model));
    HeadWeights h;
    h.wq = rng.uniform_matrix(d_model, d_head, -limit, limit);
    h.wk = rng.uniform_matrix(d_model, d_head, -limit, limit);
    h.wv = rng.uniform_matrix(d_model, d_head, -limit, limit);
    return h;
  }

  std::size_t d_model() const noexcept { return wq.rows(); }
  std::size_t d_head() const noexcept { return wq.cols(); }

  void validate() const {
    if (!wk.same_shape(wq) || !wv.same_shape(wq))
      throw ShapeError("head weights disagree: Wq " + wq.shape() + ", Wk " + wk.shape() +
                       ", Wv " + wv.shape());
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wq", wq);
    f(prefix + ".wk", wk);
    f(prefix + ".wv", wv);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".wq", wq);
    f(prefix + ".wk", wk);
    f(prefix + ".wv", wv);
  }
};

/// Records one attention head: softmax(Q K^T / sqrt(d_k) + mask) V.
/// If `weights_out` is set it receives the node holding the attention weights.
inline NodeId record_head(Tape& t, NodeId x, const HeadWeights& w, const AttentionMask& mask,
                          std::size_t seq_len, bool trainable, NodeId* weights_out = nullptr) {
  w.validate();
  const NodeId q = t.matmul(x, t.bind(w.wq, trainable));
  const NodeId k = t.matmul(x, t.bind(w.wk, trainable));
  const NodeId v = t.matmul(x, t.bind(w.wv, trainable));
  NodeId scores = t.scale(t.matmul(q, t.transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(w.d_head())));
  if (auto m = mask.additive(seq_len))
    scores = t.mask_add(scores, std::move(m));
  const NodeId weights = t.softmax_rows(scores);
  if (weights_out)
    *weights_out = weights;
  return t.matmul(weights, v);
}

struct MultiHeadAttention {
  std::vector<HeadWeights> heads;
  Matrix wo; // d_e x d_e

  static void validate_geometry(std::size_t d_model, std::size_t n_heads) {
    if (n_heads == 0)
      throw ValidationError("attention needs at least one head");
    if (d_model % n_heads != 0)
      throw ValidationError("model width " + std::to_string(d_model) +
                            " is not divisible by head count " + std::to_string(n_heads));
  }

  static MultiHeadAttention init(std::size_t d_model, std::size_t n_heads, Rng& rng) {
    validate_geometry(d_model, n_heads);
    MultiHeadAttention m;
    for (std::size_t i = 0; i < n_heads; ++i)
      m.heads.push_back(HeadWeights::init(d_model, d_model / n_heads, rng));
    const double limit = std::sqrt(1.0 / static_cast<double>(d_model));
    m.wo = rng.uniform_matrix(d_model, d_model, -limit, limit);
    return m;
  }

  std::size_t d_model() const noexcept { return wo.rows(); }

  void validate() const {
    validate_geometry(d_model(), heads.size());
    for (const auto& h : heads) {
      h.validate();
      if (h.d_model() != d_model() || h.d_head() * heads.size() != d_model())
        throw ShapeError("head " + h.wq.shape() + " inconsistent with width " +
                         std::to_string(d_model()) + " and " + std::to_string(heads.size()) +
                         " heads");
    }
    if (wo.cols() != d_model())
      throw ShapeError("output projection must be square, got " + wo.shape());
  }

  // Heads are recorded independently; their order only fixes column placement.
  NodeId record(Tape& t, NodeId x, const AttentionMask& mask, std::size_t seq_len,
                bool trainable) const {
    validate();
    std::vector<NodeId> outs;
    outs.reserve(heads.size());
    for (const auto& h : heads)
      outs.push_back(record_head(t, x, h, mask, seq_len, trainable));
    const NodeId cat = outs.size() == 1 ? outs.front() : t.concat_cols(outs);
    return t.matmul(cat, t.bind(wo, trainable));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < heads.size(); ++i)
      heads[i].visit(prefix + ".head" + std::to_string(i), f);
    f(prefix + ".wo", wo);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    for (std::size_t i = 0; i < heads.size(); ++i)
      heads[i].visit(prefix + ".head" + std::to_string(i), f);
    f(prefix + ".wo", wo);
  }
};

/// Post-norm encoder block:
///   y1 = LN(x + MHA(x));  y2 = LN(y1 + W2 gelu(W1 y1 + b1) + b2)
struct EncoderBlock {
  MultiHeadAttention mha;
  nn::LayerNormParams norm1;
  nn::DenseLayer ff_in;  // d_e -> d_ff, gelu
  nn::DenseLayer ff_out; // d_ff -> d_e
  nn::LayerNormParams norm2;

  static EncoderBlock init(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, Rng& rng) {
    EncoderBlock b;
    b.mha = MultiHeadAttention::init(d_model, n_heads, rng);
    b.norm1 = nn::LayerNormParams(d_model);
    b.ff_in = nn::DenseLayer::init(d_model, d_ff, rng, nn::ActivationKind::gelu());
    b.ff_out = nn::DenseLayer::init(d_ff, d_model, rng);
    b.norm2 = nn::LayerNormParams(d_model);
    return b;
  }

  std::size_t d_model() const noexcept { return mha.d_model(); }

  NodeId record(Tape& t, NodeId x, const AttentionMask& mask, std::size_t seq_len,
                bool trainable) const {
    if (ff_out.out_features() != d_model() || ff_in.in_features() != d_model())
      throw ShapeError("feed-forward " + ff_in.weight.shape() + " -> " + ff_out.weight.shape() +
                       " does not return to width " + std::to_string(d_model()));
    const NodeId attn = mha.record(t, x, mask, seq_len, trainable);
    const NodeId y1 = norm1.record(t, t.add(x, attn), trainable);
    const NodeId ff = ff_out.record(t, ff_in.record(t, y1, trainable), trainable);
    return norm2.record(t, t.add(y1, ff), trainable);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    mha.visit(prefix + ".attn", f);
    norm1.visit(prefix + ".norm1", f);
    ff_in.visit(prefix + ".ff_in", f);
    ff_out.visit(prefix + ".ff_out", f);
    norm2.visit(prefix + ".norm2", f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    mha.visit(prefix + ".attn", f);
    norm1.visit(prefix + ".norm1", f);
    ff_in.visit(prefix + ".ff_in", f);
    ff_out.visit(prefix + ".ff_out", f);
    norm2.visit(prefix + ".norm2", f);
  }
};

inline NodeId record_stack(Tape& t, NodeId x, const std::vector<EncoderBlock>& blocks,
                           const AttentionMask& mask, std::size_t seq_len, bool trainable) {
  for (const auto& b : blocks) {
    if (b.d_model() != blocks.front().d_model())
      throw ShapeError("encoder blocks differ in width");
    x = b.record(t, x, mask, seq_len, trainable);
  }
  return x;
}

// -- value-level entry points ------------------------------------------------

inline void require_width(const Matrix& x, std::size_t d_model, const char* op) {
  if (x.cols() != d_model)
    throw ShapeError(std::string(op) + ": input " + x.shape() + " vs model width " +
                     std::to_string(d_model));
}

inline Matrix scaled_dot_attention(const Matrix& x, const HeadWeights& w,
                                   const AttentionMask& mask = {}) {
  require_width(x, w.d_model(), "scaled_dot_attention");
  Tape t;
  record_head(t, t.frozen(x), w, mask, x.rows(), false);
  return t.forward();
}

/// The row-stochastic T x T weight matrix of one head.
inline Matrix attention_weights(const Matrix& x, const HeadWeights& w,
                                const AttentionMask& mask = {}) {
  require_width(x, w.d_model(), "attention_weights");
  Tape t;
  NodeId weights = 0;
  record_head(t, t.frozen(x), w, mask, x.rows(), false, &weights);
  t.forward();
  return t.value(weights);
}

inline Matrix multi_head(const Matrix& x, const MultiHeadAttention& mha,
                         const AttentionMask& mask = {}) {
  mha.validate();
  require_width(x, mha.d_model(), "multi_head");
  Tape t;
  mha.record(t, t.frozen(x), mask, x.rows(), false);
  return t.forward();
}

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
inline Matrix positional_encoding(std::size_t seq_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0)
    throw ValidationError("positional encoding needs an even width, got " +
                          std::to_string(d_model));
  Matrix pe(seq_len, d_model);
  for (std::size_t pos = 0; pos < seq_len; ++pos)
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe(pos, i) = std::sin(angle);
      pe(pos, i + 1) = std::cos(angle);
    }
  return pe;
}

inline Matrix encoder_block(const Matrix& x, const EncoderBlock& blk,
                            const AttentionMask& mask = {}) {
  require_width(x, blk.d_model(), "encoder_block");
  Tape t;
  blk.record(t, t.frozen(x), mask, x.rows(), false);
  return t.forward();
}

inline Matrix encode_stack(const Matrix& x, const std::vector<EncoderBlock>& blocks,
                           const AttentionMask& mask = {}) {
  if (blocks.empty())
    return x;
  for (const auto& b : blocks)
    require_width(x, b.d_model(), "encode_stack");
  Tape t;
  record_stack(t, t.frozen(x), blocks, mask, x.rows(), false);
  return t.forward();
}

} // namespace ibn::attention
