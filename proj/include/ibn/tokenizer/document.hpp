#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ibn/errors.hpp"
#include "ibn/tokenizer/text.hpp"

namespace ibn::tokenizer {

struct Sentence {
  std::vector<Token> tokens;
  std::vector<std::string> pos; // empty, or one tag per token
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  std::vector<std::string> words() const {
    std::vector<std::string> w;
    w.reserve(tokens.size());
    for (const auto& t : tokens)
      w.push_back(t.text);
    return w;
  }

  bool operator==(const Sentence&) const = default;
};

/// Token range [token_start, token_end) of one sentence, tagged with a group.
struct Span {
  std::size_t sentence = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string group;

  bool operator==(const Span&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Span& s) {
  return os << s.group << "[" << s.token_start << "," << s.token_end << ") chars [" << s.char_start
            << "," << s.char_end << ")";
}

struct Doc {
  std::string text;
  std::vector<Sentence> sentences;
  std::vector<Span> spans;
  std::vector<double> confidences; // parallel to spans when produced by a model

  std::map<std::string, std::vector<std::size_t>> span_groups() const {
    std::map<std::string, std::vector<std::size_t>> g;
    for (std::size_t i = 0; i < spans.size(); ++i)
      g[spans[i].group].push_back(i);
    return g;
  }

  std::string span_text(const Span& s) const {
    return text.substr(s.char_start, s.char_end - s.char_start);
  }
};

/// Splits `text` into sentences and pre-split tokens with absolute offsets.
inline Doc make_doc(std::string text) {
  Doc d;
  d.text = std::move(text);
  for (const auto& st : split_sentences(d.text)) {
    Sentence s;
    s.tokens = pre_split(st.text, st.offset);
    s.char_start = st.offset;
    s.char_end = st.offset + st.text.size();
    if (!s.tokens.empty())
      d.sentences.push_back(std::move(s));
  }
  return d;
}

/// Sentence from explicit tokens joined by single spaces.
inline Sentence sentence_from_words(const std::vector<std::string>& words, std::string* text_out) {
  Sentence s;
  std::string text;
  for (const auto& w : words) {
    if (!text.empty())
      text += ' ';
    s.tokens.push_back({w, text.size(), text.size() + w.size()});
    text += w;
  }
  s.char_end = text.size();
  if (text_out)
    *text_out = std::move(text);
  return s;
}

/// An ordered, closed set of string labels with dense ids.
class LabelSet {
public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (!ids_.emplace(names_[i], static_cast<int>(i)).second)
        throw ValidationError("duplicate label '" + names_[i] + "'");
  }

  int id(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end())
      throw ValidationError("unknown label '" + std::string(name) + "'");
    return it->second;
  }
  bool contains(std::string_view name) const { return ids_.count(std::string(name)) > 0; }
  const std::string& name(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
      throw ValidationError("label id " + std::to_string(id) + " out of range");
    return names_[static_cast<std::size_t>(id)];
  }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const LabelSet& o) const { return names_ == o.names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

inline const std::vector<std::string>& span_group_names() {
  static const std::vector<std::string> g{"VENDOR", "DEVICE",   "METRIC",   "STATE",
                                          "DURATION", "COUNT", "LOCATION", "VLAN_ID"};
  return g;
}

inline LabelSet bio_labels(const std::vector<std::string>& groups = span_group_names()) {
  std::vector<std::string> names{"O"};
  for (const auto& g : groups) {
    names.push_back("B-" + g);
    names.push_back("I-" + g);
  }
  return LabelSet(std::move(names));
}

inline LabelSet pos_labels() {
  return LabelSet({"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART",
                   "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"});
}

/// Rejects empty, out-of-range or overlapping spans over `n_tokens` tokens.
inline void validate_spans(std::size_t n_tokens, const std::vector<Span>& spans) {
  std::vector<bool> taken(n_tokens, false);
  for (const auto& s : spans) {
    if (s.group.empty())
      throw ValidationError("span has no group");
    if (s.token_start >= s.token_end)
      throw ValidationError("span [" + std::to_string(s.token_start) + ", " +
                            std::to_string(s.token_end) + ") is empty");
    if (s.token_end > n_tokens)
      throw ValidationError("span end " + std::to_string(s.token_end) + " exceeds " +
                            std::to_string(n_tokens) + " tokens");
    for (std::size_t i = s.token_start; i < s.token_end; ++i) {
      if (taken[i])
        throw ValidationError("spans overlap at token " + std::to_string(i));
      taken[i] = true;
    }
  }
}

inline std::vector<std::string> spans_to_bio(std::size_t n_tokens, const std::vector<Span>& spans) {
  validate_spans(n_tokens, spans);
  std::vector<std::string> labels(n_tokens, "O");
  for (const auto& s : spans) {
    labels[s.token_start] = "B-" + s.group;
    for (std::size_t i = s.token_start + 1; i < s.token_end; ++i)
      labels[i] = "I-" + s.group;
  }
  return labels;
}

/// Decodes BIO labels into token spans. An I-g that does not continue a g span
/// opens a new one, as if it were B-g.
inline std::vector<Span> bio_to_spans(const std::vector<std::string>& labels,
                                      std::size_t sentence_index = 0) {
  std::vector<Span> out;
  bool open = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& l = labels[i];
    if (l == "O") {
      open = false;
      continue;
    }
    if (l.size() < 3 || l[1] != '-' || (l[0] != 'B' && l[0] != 'I'))
      throw ValidationError("malformed BIO label '" + l + "'");
    const std::string group = l.substr(2);
    if (l[0] == 'I' && open && out.back().group == group) {
      out.back().token_end = i + 1;
      continue;
    }
    out.push_back({sentence_index, i, i + 1, 0, 0, group});
    open = true;
  }
  return out;
}

/// Fills span character offsets from the sentence's token offsets.
inline void attach_offsets(const Sentence& s, std::vector<Span>& spans) {
  for (auto& sp : spans) {
    if (sp.token_end > s.tokens.size() || sp.token_start >= sp.token_end)
      throw ValidationError("span token range does not fit the sentence");
    sp.char_start = s.tokens[sp.token_start].char_start;
    sp.char_end = s.tokens[sp.token_end - 1].char_end;
  }
}

} // namespace ibn::tokenizer
