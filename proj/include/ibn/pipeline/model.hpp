#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ibn/attention.hpp"
#include "ibn/autograd.hpp"
#include "ibn/errors.hpp"
#include "ibn/nn/layers.hpp"
#include "ibn/rng.hpp"
#include "ibn/tokenizer/document.hpp"
#include "ibn/tokenizer/vocabulary.hpp"

namespace ibn::pipeline {

using autograd::NodeId;
using autograd::Tape;
using tokenizer::LabelSet;
using tokenizer::Vocabulary;

struct ModelGeometry {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_len = 32;

  static ModelGeometry desk() { return {}; }
  static ModelGeometry paper() { return {768, 12, 12, 3072, 512}; }

  std::size_t head_width() const { return d_model / heads; }

  void validate() const {
    if (d_model == 0 || d_ff == 0)
      throw ValidationError("model and feed-forward widths must be positive");
    if (d_model % 2 != 0)
      throw ValidationError("model width must be even for sinusoidal positions");
    attention::MultiHeadAttention::validate_geometry(d_model, heads);
    if (max_len < 3)
      throw ValidationError("max_len must leave room for [CLS], [SEP] and one piece");
  }

  bool operator==(const ModelGeometry&) const = default;
};

/// Encoder with token-level heads. Parameters are owned here; the training and
/// inference code records them onto a tape per sentence.
class NerModel {
public:
  ModelGeometry geometry;
  Vocabulary vocab;
  LabelSet pos_labels;
  LabelSet ner_labels;

  Matrix embedding;
  std::vector<attention::EncoderBlock> blocks;
  nn::DenseLayer pooler;
  nn::DenseLayer mlm_head;
  nn::DenseLayer pos_head;
  nn::DenseLayer ner_head;

  NerModel() = default;

  static NerModel create(const ModelGeometry& g, Vocabulary vocab, LabelSet pos, LabelSet ner,
                         std::uint64_t seed) {
    g.validate();
    if (pos.size() == 0 || ner.size() == 0)
      throw ValidationError("label sets must be nonempty");
    Rng rng(seed);
    NerModel m;
    m.geometry = g;
    m.vocab = std::move(vocab);
    m.pos_labels = std::move(pos);
    m.ner_labels = std::move(ner);
    m.embedding = rng.uniform_matrix(m.vocab.size(), g.d_model, -1.0, 1.0);
    for (std::size_t i = 0; i < g.layers; ++i)
      m.blocks.push_back(attention::EncoderBlock::init(g.d_model, g.heads, g.d_ff, rng));
    m.pooler = nn::DenseLayer::init(g.d_model, g.d_model, rng, nn::ActivationKind::tanh());
    m.mlm_head = nn::DenseLayer::init(g.d_model, m.vocab.size(), rng);
    m.pos_head = nn::DenseLayer::init(g.d_model, m.pos_labels.size(), rng);
    m.ner_head = nn::DenseLayer::init(g.d_model, m.ner_labels.size(), rng);
    m.refresh_positions();
    return m;
  }

  void validate() const {
    geometry.validate();
    auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const std::string& what) {
      if (m.rows() != r || m.cols() != c)
        throw ShapeError(what + " is " + m.shape() + ", expected " + Matrix::shape_str(r, c));
    };
    expect(embedding, vocab.size(), geometry.d_model, "embedding");
    if (blocks.size() != geometry.layers)
      throw ShapeError("model has " + std::to_string(blocks.size()) + " blocks, geometry says " +
                       std::to_string(geometry.layers));
    for (const auto& b : blocks) {
      b.mha.validate();
      if (b.d_model() != geometry.d_model || b.mha.heads.size() != geometry.heads ||
          b.ff_in.out_features() != geometry.d_ff)
        throw ShapeError("encoder block does not match the geometry");
    }
    expect(pooler.weight, geometry.d_model, geometry.d_model, "pooler");
    expect(mlm_head.weight, geometry.d_model, vocab.size(), "mlm head");
    expect(pos_head.weight, geometry.d_model, pos_labels.size(), "pos head");
    expect(ner_head.weight, geometry.d_model, ner_labels.size(), "ner head");
  }

  template <class F>
  void visit(F&& f) {
    f(std::string("embedding"), embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("block" + std::to_string(i), f);
    pooler.visit("pooler", f);
    mlm_head.visit("mlm_head", f);
    pos_head.visit("pos_head", f);
    ner_head.visit("ner_head", f);
  }
  template <class F>
  void visit(F&& f) const {
    f(std::string("embedding"), embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("block" + std::to_string(i), f);
    pooler.visit("pooler", f);
    mlm_head.visit("mlm_head", f);
    pos_head.visit("pos_head", f);
    ner_head.visit("ner_head", f);
  }

  /// Embedding and encoder parameters, the part frozen in feature-based training.
  template <class F>
  void visit_encoder(F&& f) {
    f(std::string("embedding"), embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("block" + std::to_string(i), f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
  }

  const Matrix& positions() const { return positions_; }
  void refresh_positions() { positions_ = attention::positional_encoding(geometry.max_len, geometry.d_model); }

  /// Records embedding lookup + positions + encoder stack; returns T x d_e.
  NodeId record_encoder(Tape& t, const std::vector<int>& ids, bool trainable) const {
    if (ids.empty() || ids.size() > geometry.max_len)
      throw ValidationError("sequence length " + std::to_string(ids.size()) + " outside [1, " +
                            std::to_string(geometry.max_len) + "]");
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
        throw ValidationError("token id " + std::to_string(id) + " outside the vocabulary");
    const NodeId emb = t.embed_lookup(t.bind(embedding, trainable), ids);
    const NodeId x = t.add(emb, t.constant(slice_rows(positions_, 0, ids.size())));
    return attention::record_stack(t, x, blocks, attention::AttentionMask::none(), ids.size(),
                                   trainable);
  }

  /// Sentence vector: pooler applied to the [CLS] row.
  NodeId record_pooled(Tape& t, NodeId hidden, bool trainable) const {
    return pooler.record(t, t.select_rows(hidden, {0}), trainable);
  }

  /// Encodes ids and returns the final hidden states.
  Matrix encode(const std::vector<int>& ids) const {
    Tape t;
    record_encoder(t, ids, false);
    return t.forward();
  }

private:
  Matrix positions_;
};

// -- checkpoint ------------------------------------------------------------------
//
// File layout, all integers little-endian:
//   "IBNCKPT\0" u32 version  u32 section_count
//   section*: u32 name_len, name, u64 payload_len, payload
// Sections appear in a fixed order: geometry, vocab, pos_labels, ner_labels, then
// one "param:<name>" per matrix in visit order (u64 rows, u64 cols, f64 data).

inline constexpr char kCheckpointMagic[8] = {'I', 'B', 'N', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::uint64_t u(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u(4)); }
  std::uint64_t u64() { return u(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size())
      throw IoError(what_ + ": truncated checkpoint");
  }
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string join_lines(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items)
    s += i + '\n';
  return s;
}

inline std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);)
    out.push_back(line);
  return out;
}

} // namespace detail

inline std::string serialize(const NerModel& m) {
  m.validate();
  std::vector<std::pair<std::string, std::string>> sections;
  std::string geo;
  for (std::uint64_t v : {m.geometry.d_model, m.geometry.heads, m.geometry.layers, m.geometry.d_ff,
                          m.geometry.max_len, std::size_t{m.vocab.lowercase() ? 1u : 0u}})
    detail::put_u64(geo, v);
  sections.emplace_back("geometry", geo);
  sections.emplace_back("vocab", detail::join_lines(m.vocab.pieces()));
  sections.emplace_back("pos_labels", detail::join_lines(m.pos_labels.names()));
  sections.emplace_back("ner_labels", detail::join_lines(m.ner_labels.names()));
  m.visit([&](const std::string& name, const Matrix& mat) {
    std::string p;
    detail::put_u64(p, mat.rows());
    detail::put_u64(p, mat.cols());
    for (double d : mat.data())
      detail::put_f64(p, d);
    sections.emplace_back("param:" + name, std::move(p));
  });

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u64(out, payload.size());
    out += payload;
  }
  return out;
}

inline NerModel deserialize(const std::string& buf, const std::string& what = "checkpoint") {
  detail::Reader r(buf, what);
  if (r.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
    throw IoError(what + ": not a model checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw IoError(what + ": unsupported checkpoint version " + std::to_string(v));
  const std::uint32_t count = r.u32();
  std::map<std::string, std::string> sections;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint64_t len = r.u64();
    if (!sections.emplace(name, r.bytes(len)).second)
      throw IoError(what + ": duplicate section " + name);
    order.push_back(name);
  }
  if (!r.done())
    throw IoError(what + ": trailing bytes after last section");
  auto section = [&](const std::string& name) -> const std::string& {
    auto it = sections.find(name);
    if (it == sections.end())
      throw IoError(what + ": missing section " + name);
    return it->second;
  };

  detail::Reader g(section("geometry"), what);
  ModelGeometry geo;
  geo.d_model = g.u64();
  geo.heads = g.u64();
  geo.layers = g.u64();
  geo.d_ff = g.u64();
  geo.max_len = g.u64();
  const bool lowercase = g.u64() != 0;

  NerModel m = NerModel::create(
      geo, Vocabulary::from_pieces(detail::split_lines(section("vocab")), lowercase),
      LabelSet(detail::split_lines(section("pos_labels"))),
      LabelSet(detail::split_lines(section("ner_labels"))), 0);
  std::size_t params = 0;
  m.visit([&](const std::string& name, Matrix& mat) {
    detail::Reader p(section("param:" + name), what);
    const auto rows = p.u64(), cols = p.u64();
    if (rows != mat.rows() || cols != mat.cols())
      throw IoError(what + ": parameter " + name + " is " + Matrix::shape_str(rows, cols) +
                    ", expected " + mat.shape());
    for (double& d : mat.data())
      d = p.f64();
    if (!p.done())
      throw IoError(what + ": parameter " + name + " has trailing bytes");
    ++params;
  });
  if (params + 4 != sections.size())
    throw IoError(what + ": checkpoint has unexpected sections");
  return m;
}

/// Writes to a temporary sibling and renames it into place, so readers see
/// either the previous file or the complete new one.
inline void save_checkpoint(const NerModel& m, const std::filesystem::path& path) {
  const std::string bytes = serialize(m);
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out)
      throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline NerModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path.string());
}

} // namespace ibn::pipeline
