#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ibn/errors.hpp"
#include "ibn/tokenizer/text.hpp"

namespace ibn::tokenizer {

inline constexpr std::string_view kContinuation = "##";

class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr std::size_t kSpecialCount = 5;

  explicit Vocabulary(bool lowercase = true) : lowercase_(lowercase) {
    for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"})
      add(s);
  }

  /// Returns the id of `piece`, inserting it if absent.
  int add(const std::string& piece) {
    if (piece.empty())
      throw ValidationError("vocabulary piece must be nonempty");
    for (char c : piece)
      if (c == '\n' || c == '\r')
        throw ValidationError("vocabulary piece contains a line break");
    if (auto it = ids_.find(piece); it != ids_.end())
      return it->second;
    const int id = static_cast<int>(pieces_.size());
    pieces_.push_back(piece);
    ids_.emplace(piece, id);
    return id;
  }

  std::optional<int> find(std::string_view piece) const {
    if (auto it = ids_.find(std::string(piece)); it != ids_.end())
      return it->second;
    return std::nullopt;
  }
  bool contains(std::string_view piece) const { return find(piece).has_value(); }

  const std::string& piece(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
      throw NotFoundError("token id " + std::to_string(id) + " out of range");
    return pieces_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  bool lowercase() const { return lowercase_; }
  static bool is_special(int id) { return id >= 0 && id < static_cast<int>(kSpecialCount); }

  std::string normalize(std::string_view word) const {
    return lowercase_ ? to_lower(word) : std::string(word);
  }

  /// Greedy longest-match-first over one pre-split word. A word containing
  /// any unmatched position becomes a single [UNK].
  std::vector<int> segment_word(std::string_view raw) const {
    const std::string word = normalize(raw);
    const auto chars = utf8_chars(word);
    std::vector<int> out;
    std::size_t start = 0;
    while (start < chars.size()) {
      std::optional<int> hit;
      std::size_t end = chars.size();
      for (; end > start; --end) {
        std::string cand = start > 0 ? std::string(kContinuation) : std::string();
        for (std::size_t k = start; k < end; ++k)
          cand += chars[k];
        if ((hit = find(cand)))
          break;
      }
      if (!hit)
        return {kUnk};
      out.push_back(*hit);
      start = end;
    }
    return out;
  }

  bool operator==(const Vocabulary& o) const {
    return lowercase_ == o.lowercase_ && pieces_ == o.pieces_;
  }

  /// One piece per line; the line number is the id.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot write vocabulary to " + path);
    for (const auto& p : pieces_)
      out << p << '\n';
    if (!out)
      throw IoError("write failed for " + path);
  }

  static Vocabulary from_pieces(const std::vector<std::string>& pieces, bool lowercase = true) {
    Vocabulary v(lowercase);
    if (pieces.size() < kSpecialCount)
      throw ValidationError("vocabulary is missing special tokens");
    for (std::size_t i = 0; i < kSpecialCount; ++i)
      if (pieces[i] != v.pieces_[i])
        throw ValidationError("expected " + v.pieces_[i] + " at id " + std::to_string(i) +
                              ", found '" + pieces[i] + "'");
    for (std::size_t i = kSpecialCount; i < pieces.size(); ++i)
      if (v.add(pieces[i]) != static_cast<int>(i))
        throw ValidationError("duplicate vocabulary piece '" + pieces[i] + "'");
    return v;
  }

  static Vocabulary load(const std::string& path, bool lowercase = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw IoError("cannot open vocabulary " + path);
    std::vector<std::string> pieces;
    for (std::string line; std::getline(in, line);)
      pieces.push_back(line);
    return from_pieces(pieces, lowercase);
  }

private:
  bool lowercase_;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> ids_;
};

namespace detail {

inline std::string merge_pieces(const std::string& a, const std::string& b) {
  return a + b.substr(kContinuation.size());
}

} // namespace detail

/// Trains a subword vocabulary by repeatedly merging the most frequent
/// adjacent piece pair. Ties go to the lexicographically smallest pair.
inline Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t max_size,
                              bool lowercase = true) {
  if (corpus.empty())
    throw ValidationError("build_vocab needs a nonempty corpus");
  Vocabulary vocab(lowercase);

  std::map<std::string, std::size_t> word_freq;
  for (const auto& line : corpus)
    for (const auto& tok : pre_split(line))
      ++word_freq[vocab.normalize(tok.text)];
  if (word_freq.empty())
    throw ValidationError("build_vocab corpus contains no words");

  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    std::vector<std::string> syms;
    for (const auto& c : utf8_chars(w)) {
      syms.push_back(syms.empty() ? c : std::string(kContinuation) + c);
      alphabet.insert(syms.back());
    }
    words.emplace_back(std::move(syms), f);
  }
  if (max_size < Vocabulary::kSpecialCount + alphabet.size())
    throw ValidationError("max_size " + std::to_string(max_size) + " is below specials + alphabet (" +
                          std::to_string(Vocabulary::kSpecialCount + alphabet.size()) + ")");
  for (const auto& a : alphabet)
    vocab.add(a);

  while (vocab.size() < max_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pairs[{syms[i], syms[i + 1]}] += f;
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 1;
    for (const auto& [p, c] : pairs) // ordered, so the first maximum is the smallest pair
      if (c > best_count) {
        best = &p;
        best_count = c;
      }
    if (!best)
      break;
    const auto [a, b] = *best;
    const std::string merged = detail::merge_pieces(a, b);
    vocab.add(merged);
    for (auto& [syms, f] : words) {
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
  }
  return vocab;
}

/// Subword ids for a pre-split word sequence, wrapped in [CLS] ... [SEP].
/// `word_of[k]` is the word index of piece k, or -1 for the wrappers.
struct Encoding {
  std::vector<int> ids;
  std::vector<int> word_of;
  std::vector<bool> first_piece;
};

inline Encoding encode_words(const Vocabulary& vocab, const std::vector<std::string>& words) {
  Encoding e;
  e.ids.push_back(Vocabulary::kCls);
  e.word_of.push_back(-1);
  e.first_piece.push_back(false);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto pieces = vocab.segment_word(words[w]);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      e.ids.push_back(pieces[k]);
      e.word_of.push_back(static_cast<int>(w));
      e.first_piece.push_back(k == 0);
    }
  }
  e.ids.push_back(Vocabulary::kSep);
  e.word_of.push_back(-1);
  e.first_piece.push_back(false);
  return e;
}

inline std::vector<int> segment(const Vocabulary& vocab, std::string_view sentence) {
  std::vector<std::string> words;
  for (auto& t : pre_split(sentence))
    words.push_back(std::move(t.text));
  return encode_words(vocab, words).ids;
}

} // namespace ibn::tokenizer
