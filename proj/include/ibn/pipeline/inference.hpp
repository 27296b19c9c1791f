#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/model.hpp"
#include "ibn/tokenizer/document.hpp"
#include "ibn/tokenizer/vocabulary.hpp"

namespace ibn::pipeline {

using tokenizer::Doc;

/// Subword encoding of a word sequence, cut to the model's max_len. Words whose
/// first piece falls past the cut are reported in `words_kept`.
struct ModelInput {
  tokenizer::Encoding enc;
  std::size_t words_kept = 0;
};

inline ModelInput model_input(const NerModel& m, const std::vector<std::string>& words) {
  ModelInput in{tokenizer::encode_words(m.vocab, words), words.size()};
  auto& e = in.enc;
  const std::size_t limit = m.geometry.max_len;
  if (e.ids.size() > limit) {
    e.ids.resize(limit - 1);
    e.word_of.resize(limit - 1);
    e.first_piece.resize(limit - 1);
    e.ids.push_back(Vocabulary::kSep);
    e.word_of.push_back(-1);
    e.first_piece.push_back(false);
    // a word is usable only if its first piece survived
    in.words_kept = 0;
    for (std::size_t k = 0; k < e.ids.size(); ++k)
      if (e.first_piece[k])
        in.words_kept = static_cast<std::size_t>(e.word_of[k]) + 1;
  }
  return in;
}

/// Per-piece targets from word labels; -1 everywhere except first pieces.
inline std::vector<int> piece_targets(const ModelInput& in, const std::vector<int>& word_labels) {
  std::vector<int> t(in.enc.ids.size(), autograd::kIgnoreIndex);
  if (word_labels.empty())
    return t;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (in.enc.first_piece[k])
      t[k] = word_labels[static_cast<std::size_t>(in.enc.word_of[k])];
  return t;
}

struct WordPrediction {
  std::vector<std::string> pos;
  std::vector<double> pos_prob;
  std::vector<std::string> bio;
  std::vector<double> bio_prob;
};

inline WordPrediction predict_words(const NerModel& m, const std::vector<std::string>& words) {
  WordPrediction p;
  p.pos.assign(words.size(), "X");
  p.pos_prob.assign(words.size(), 0.0);
  p.bio.assign(words.size(), "O");
  p.bio_prob.assign(words.size(), 0.0);
  if (words.empty())
    return p;
  const ModelInput in = model_input(m, words);
  const Matrix hidden = m.encode(in.enc.ids);
  const Matrix pos = row_softmax(m.pos_head.apply(hidden));
  const Matrix ner = row_softmax(m.ner_head.apply(hidden));
  auto argmax = [](const Matrix& probs, std::size_t r) {
    auto row = probs.row_span(r);
    const auto it = std::max_element(row.begin(), row.end());
    return std::pair{static_cast<int>(it - row.begin()), *it};
  };
  for (std::size_t k = 0; k < in.enc.ids.size(); ++k) {
    if (!in.enc.first_piece[k])
      continue;
    const auto w = static_cast<std::size_t>(in.enc.word_of[k]);
    const auto [pi, pp] = argmax(pos, k);
    const auto [ni, np] = argmax(ner, k);
    p.pos[w] = m.pos_labels.name(pi);
    p.pos_prob[w] = pp;
    p.bio[w] = m.ner_labels.name(ni);
    p.bio_prob[w] = np;
  }
  return p;
}

/// Span confidence: geometric mean of the chosen label probabilities.
inline double span_confidence(const WordPrediction& p, const Span& s) {
  double log_sum = 0.0;
  for (std::size_t i = s.token_start; i < s.token_end; ++i)
    log_sum += std::log(std::max(p.bio_prob[i], 1e-300));
  return std::exp(log_sum / static_cast<double>(s.token_end - s.token_start));
}

/// Tags every sentence of `text`. Empty text gives a Doc with no sentences.
inline Doc predict(const NerModel& m, const std::string& text) {
  Doc d = tokenizer::make_doc(text);
  for (std::size_t si = 0; si < d.sentences.size(); ++si) {
    auto& s = d.sentences[si];
    const WordPrediction p = predict_words(m, s.words());
    s.pos = p.pos;
    auto spans = tokenizer::bio_to_spans(p.bio, si);
    tokenizer::attach_offsets(s, spans);
    for (const auto& sp : spans) {
      d.confidences.push_back(span_confidence(p, sp));
      d.spans.push_back(sp);
    }
  }
  return d;
}

struct EvalMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double pos_accuracy = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t pos_correct = 0;
  std::size_t pos_total = 0;

  bool operator==(const EvalMetrics&) const = default;
};

/// Fills the ratios from the counts. Undefined ratios are 0.
inline EvalMetrics finalize(EvalMetrics m) {
  const auto tp = static_cast<double>(m.true_positives);
  const double pred = tp + static_cast<double>(m.false_positives);
  const double gold = tp + static_cast<double>(m.false_negatives);
  m.precision = pred > 0 ? tp / pred : 0.0;
  m.recall = gold > 0 ? tp / gold : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.pos_accuracy =
      m.pos_total ? static_cast<double>(m.pos_correct) / static_cast<double>(m.pos_total) : 0.0;
  return m;
}

/// Adds span-exact matches between gold and predicted spans of one sentence.
inline void count_spans(EvalMetrics& m, const std::vector<Span>& gold,
                        const std::vector<Span>& predicted) {
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  std::multiset<Key> g;
  for (const auto& s : gold)
    g.insert({s.token_start, s.token_end, s.group});
  for (const auto& s : predicted) {
    auto it = g.find({s.token_start, s.token_end, s.group});
    if (it != g.end()) {
      ++m.true_positives;
      g.erase(it);
    } else {
      ++m.false_positives;
    }
  }
  m.false_negatives += g.size();
}

inline EvalMetrics evaluate(const NerModel& model, const std::vector<LabeledSentence>& data) {
  EvalMetrics m;
  for (const auto& s : data) {
    const auto p = predict_words(model, s.words());
    count_spans(m, s.spans, tokenizer::bio_to_spans(p.bio));
    for (std::size_t i = 0; i < s.pos.size(); ++i) {
      ++m.pos_total;
      if (p.pos[i] == s.pos[i])
        ++m.pos_correct;
    }
  }
  return finalize(m);
}

} // namespace ibn::pipeline
