#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibn/nn/optimizer.hpp"
#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/inference.hpp"
#include "ibn/pipeline/model.hpp"

namespace ibn::pipeline {

enum class Task { pos, ner, joint };
enum class Mode { fine_tune, feature_based };

inline Task task_from_string(const std::string& s) {
  if (s == "pos")
    return Task::pos;
  if (s == "ner")
    return Task::ner;
  if (s == "joint")
    return Task::joint;
  throw ValidationError("unknown task '" + s + "' (expected pos, ner or joint)");
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "fine_tune" || s == "fine-tune")
    return Mode::fine_tune;
  if (s == "feature_based" || s == "feature-based")
    return Mode::feature_based;
  throw ValidationError("unknown mode '" + s + "' (expected fine_tune or feature_based)");
}

struct TrainConfig {
  std::size_t epochs = 8;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  double clip_norm = 5.0; // global gradient norm cap, 0 disables
  std::uint64_t seed = 42;

  void validate() const {
    if (batch_size == 0)
      throw ValidationError("batch_size must be positive");
    if (!(clip_norm >= 0.0))
      throw ValidationError("clip_norm must be non-negative");
    nn::Optimizer({nn::OptimizerKind::momentum, learning_rate, momentum});
  }
};

struct Split {
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> dev;
};

/// Seeded shuffle, then the last ceil(dev_fraction * n) sentences form dev.
inline Split split_dataset(const std::vector<LabeledSentence>& data, std::uint64_t seed,
                           double dev_fraction = 0.1) {
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0))
    throw ValidationError("dev_fraction must lie in [0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_dev = static_cast<std::size_t>(std::ceil(dev_fraction * static_cast<double>(data.size())));
  Split s;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i + n_dev < order.size() ? s.train : s.dev).push_back(data[order[i]]);
  return s;
}

/// Accumulates tape gradients for a fixed parameter list and applies batched
/// optimizer steps.
class GradientBuffer {
public:
  explicit GradientBuffer(std::vector<Matrix*> params) : params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      index_.emplace(params_[i], i);
      grads_.emplace_back(params_[i]->rows(), params_[i]->cols());
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Matrix* p : params_)
      n += p->size();
    return n;
  }

  void add(Tape& t, const std::map<NodeId, Matrix>& grads) {
    for (const auto& [node, g] : grads) {
      auto it = index_.find(&t.parameter_source(node));
      if (it == index_.end())
        continue;
      Matrix& dst = grads_[it->second];
      auto d = dst.data();
      auto s = g.data();
      for (std::size_t k = 0; k < d.size(); ++k)
        d[k] += s[k];
    }
    ++pending_;
  }

  std::size_t pending() const { return pending_; }

  void step(nn::Optimizer& opt, double clip_norm) {
    if (pending_ == 0)
      return;
    const double inv = 1.0 / static_cast<double>(pending_);
    double sq = 0.0;
    for (auto& g : grads_)
      for (double& v : g.data()) {
        v *= inv;
        sq += v * v;
      }
    const double norm = std::sqrt(sq);
    if (clip_norm > 0.0 && norm > clip_norm)
      for (auto& g : grads_)
        for (double& v : g.data())
          v *= clip_norm / norm;
    opt.step(params_, grads_);
    for (auto& g : grads_)
      g.fill(0.0);
    pending_ = 0;
  }

private:
  std::vector<Matrix*> params_;
  std::unordered_map<const Matrix*, std::size_t> index_;
  std::vector<Matrix> grads_;
  std::size_t pending_ = 0;
};

// -- masked language modelling ---------------------------------------------------

/// Number of masked positions among `usable` tokens: ceil(0.15 * usable).
inline std::size_t mlm_mask_count(std::size_t usable) { return (15 * usable + 99) / 100; }

inline constexpr std::size_t kMinMaskableTokens = 3;

struct MaskedSequence {
  std::vector<int> ids;       // input with [MASK] substituted
  std::vector<int> positions; // masked positions, ascending
  std::vector<int> targets;   // original ids at those positions
};

/// Masks ceil(15%) of the non-special positions. Sequences with fewer than
/// three usable tokens return no positions.
inline MaskedSequence mask_tokens(const std::vector<int>& ids, Rng& rng) {
  MaskedSequence m{ids, {}, {}};
  std::vector<int> usable;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!Vocabulary::is_special(ids[i]) || ids[i] == Vocabulary::kUnk)
      usable.push_back(static_cast<int>(i));
  if (usable.size() < kMinMaskableTokens)
    return m;
  rng.shuffle(usable);
  usable.resize(mlm_mask_count(usable.size()));
  std::sort(usable.begin(), usable.end());
  for (int p : usable) {
    m.positions.push_back(p);
    m.targets.push_back(ids[static_cast<std::size_t>(p)]);
    m.ids[static_cast<std::size_t>(p)] = Vocabulary::kMask;
  }
  return m;
}

struct MlmReport {
  std::vector<double> loss_curve; // [0] before training, then one mean per epoch
  std::size_t skipped = 0;        // sentences too short to mask
};

inline std::vector<std::vector<int>> encode_texts(const NerModel& m,
                                                  const std::vector<std::string>& texts) {
  std::vector<std::vector<int>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<std::string> words;
    for (auto& tok : tokenizer::pre_split(t))
      words.push_back(std::move(tok.text));
    out.push_back(model_input(m, words).enc.ids);
  }
  return out;
}

inline double mlm_loss(const NerModel& m, const MaskedSequence& seq, Tape& t, bool trainable) {
  const NodeId hidden = m.record_encoder(t, seq.ids, trainable);
  const NodeId picked = t.select_rows(hidden, seq.positions);
  t.cross_entropy(m.mlm_head.record(t, picked, trainable), seq.targets);
  return t.forward()(0, 0);
}

inline MlmReport pretrain_mlm(NerModel& model, const std::vector<std::string>& texts,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (texts.empty())
    throw ValidationError("pretrain_mlm needs a nonempty corpus");
  const auto sequences = encode_texts(model, texts);
  MlmReport report;

  std::vector<Matrix*> params;
  model.visit_encoder([&](const std::string&, Matrix& p) { params.push_back(&p); });
  model.mlm_head.visit("", [&](const std::string&, Matrix& p) { params.push_back(&p); });
  GradientBuffer buffer(params);
  nn::Optimizer opt({nn::OptimizerKind::momentum, cfg.learning_rate, cfg.momentum});
  Rng rng(cfg.seed);

  {
    Rng probe(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& ids : sequences) {
      const auto seq = mask_tokens(ids, probe);
      if (seq.positions.empty()) {
        ++report.skipped;
        continue;
      }
      Tape t;
      sum += mlm_loss(model, seq, t, false);
      ++n;
    }
    if (n == 0)
      throw ValidationError("no sentence has at least three maskable tokens");
    report.loss_curve.push_back(sum / static_cast<double>(n));
  }

  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t idx : order) {
      const auto seq = mask_tokens(sequences[idx], rng);
      if (seq.positions.empty())
        continue;
      Tape t;
      sum += mlm_loss(model, seq, t, true);
      ++n;
      buffer.add(t, t.backward());
      if (buffer.pending() == cfg.batch_size)
        buffer.step(opt, cfg.clip_norm);
    }
    buffer.step(opt, cfg.clip_norm);
    report.loss_curve.push_back(sum / static_cast<double>(n));
  }
  return report;
}

// -- token classification --------------------------------------------------------

struct TaggedExample {
  std::vector<int> ids;
  std::vector<int> pos_targets;
  std::vector<int> ner_targets;
};

inline TaggedExample make_example(const NerModel& m, const LabeledSentence& s) {
  const ModelInput in = model_input(m, s.words());
  std::vector<int> pos, ner;
  for (const auto& tag : s.pos)
    pos.push_back(m.pos_labels.id(tag));
  for (const auto& label : s.bio())
    ner.push_back(m.ner_labels.id(label));
  return {in.enc.ids, piece_targets(in, pos), piece_targets(in, ner)};
}

inline bool any_target(const std::vector<int>& t) {
  return std::any_of(t.begin(), t.end(), [](int v) { return v != autograd::kIgnoreIndex; });
}

/// Records the task loss; returns false if the example has no targets for it.
inline bool record_tagging_loss(const NerModel& m, const TaggedExample& ex, Task task, Mode mode,
                                Tape& t) {
  const bool use_pos = task != Task::ner && any_target(ex.pos_targets);
  const bool use_ner = task != Task::pos && any_target(ex.ner_targets);
  if (!use_pos && !use_ner)
    return false;
  const NodeId hidden = m.record_encoder(t, ex.ids, mode == Mode::fine_tune);
  std::vector<NodeId> losses;
  if (use_pos)
    losses.push_back(t.cross_entropy(m.pos_head.record(t, hidden, true), ex.pos_targets));
  if (use_ner)
    losses.push_back(t.cross_entropy(m.ner_head.record(t, hidden, true), ex.ner_targets));
  if (losses.size() == 2)
    t.add(losses[0], losses[1]);
  return true;
}

/// Parameters updated for a task and mode, in model order.
inline std::vector<Matrix*> tagging_parameters(NerModel& m, Task task, Mode mode) {
  std::vector<Matrix*> params;
  auto take = [&](const std::string&, Matrix& p) { params.push_back(&p); };
  if (mode == Mode::fine_tune)
    m.visit_encoder(take);
  if (task != Task::ner)
    m.pos_head.visit("", take);
  if (task != Task::pos)
    m.ner_head.visit("", take);
  return params;
}

struct TaggerReport {
  std::vector<double> train_loss;      // mean per epoch
  std::vector<EvalMetrics> dev;        // measured after each epoch
  std::size_t trainable_parameters = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss, const EvalMetrics& dev)>;

inline TaggerReport train_tagger(NerModel& model, const Split& data, Task task, Mode mode,
                                 const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.train.empty())
    throw ValidationError("train_tagger needs training sentences");
  std::vector<TaggedExample> examples;
  examples.reserve(data.train.size());
  for (const auto& s : data.train)
    examples.push_back(make_example(model, s));

  GradientBuffer buffer(tagging_parameters(model, task, mode));
  nn::Optimizer opt({nn::OptimizerKind::momentum, cfg.learning_rate, cfg.momentum});
  Rng rng(cfg.seed);
  TaggerReport report;
  report.trainable_parameters = buffer.parameter_count();

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t idx : order) {
      Tape t;
      if (!record_tagging_loss(model, examples[idx], task, mode, t))
        continue;
      sum += t.forward()(0, 0);
      ++n;
      buffer.add(t, t.backward());
      if (buffer.pending() == cfg.batch_size)
        buffer.step(opt, cfg.clip_norm);
    }
    buffer.step(opt, cfg.clip_norm);
    report.train_loss.push_back(n ? sum / static_cast<double>(n) : 0.0);
    report.dev.push_back(data.dev.empty() ? EvalMetrics{} : evaluate(model, data.dev));
    if (on_epoch)
      on_epoch(epoch, report.train_loss.back(), report.dev.back());
  }
  return report;
}

/// Vocabulary + fresh model for a corpus: the usual starting point for training.
inline NerModel model_for_corpus(const std::vector<LabeledSentence>& corpus,
                                 const ModelGeometry& geometry, std::size_t vocab_size,
                                 std::uint64_t seed) {
  return NerModel::create(geometry, tokenizer::build_vocab(texts(corpus), vocab_size),
                          tokenizer::pos_labels(), tokenizer::bio_labels(), seed);
}

} // namespace ibn::pipeline
