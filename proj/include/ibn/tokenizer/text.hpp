#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ibn::tokenizer {

struct Token {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  bool operator==(const Token&) const = default;
};

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (static_cast<unsigned char>(c) < 0x80)
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Splits a UTF-8 string into code points. Malformed lead bytes are taken as
/// single bytes rather than rejected.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (b >= 0xF0)
      len = 4;
    else if (b >= 0xE0)
      len = 3;
    else if (b >= 0xC0)
      len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

/// Whitespace split, with every ASCII punctuation character as its own token.
/// Offsets are byte offsets into `text`, shifted by `base`.
inline std::vector<Token> pre_split(std::string_view text, std::size_t base = 0) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    if (is_punct(text[i])) {
      out.push_back({std::string(1, text[i]), base + i, base + i + 1});
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i]) && !is_punct(text[i]))
      ++i;
    out.push_back({std::string(text.substr(start, i - start)), base + start, base + i});
  }
  return out;
}

struct SentenceText {
  std::string text;
  std::size_t offset = 0;
};

/// Rule-based splitter: a sentence ends at '.', '!' or '?' followed by
/// whitespace or end of text. Boundary whitespace is trimmed, delimiters kept.
inline std::vector<SentenceText> split_sentences(std::string_view text) {
  std::vector<SentenceText> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(text[b]))
      ++b;
    while (e > b && is_space(text[e - 1]))
      --e;
    if (b < e)
      out.push_back({std::string(text.substr(b, e - b)), b});
  };
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) {
      emit(start, i + 1);
      start = i + 1;
    }
  }
  emit(start, text.size());
  return out;
}

} // namespace ibn::tokenizer
