#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/intent.hpp"
#include "ibn/service/lifecycle.hpp"
#include "ibn/tokenizer/document.hpp"

namespace ibn::service {

using nlohmann::json;
using pipeline::IntentPayload;
using tokenizer::Span;

struct Transition {
  IntentState from = IntentState::received;
  IntentState to = IntentState::received;
  std::string at;
  std::string reason;

  bool operator==(const Transition&) const = default;
};

struct Correction {
  std::vector<Span> spans; // full replacement list for the intent
  std::string author;
  std::string created_at;
  std::string key; // content hash of the span list

  bool operator==(const Correction&) const = default;
};

/// Model output (or corrected spans) over the tokenized intent text.
struct Extraction {
  std::vector<tokenizer::Sentence> sentences;
  std::vector<Span> spans;
  std::vector<double> confidences; // parallel to spans
  IntentPayload payload;

  bool operator==(const Extraction&) const = default;
};

struct ActivationReport {
  bool activated = false;
  std::string reason;
  std::vector<std::string> matched_devices;
  std::string at;

  bool operator==(const ActivationReport&) const = default;
};

struct IntentRecord {
  std::string id;
  std::string text;
  IntentState state = IntentState::received;
  Extraction extraction;
  std::vector<Correction> corrections;
  std::string model_version;
  std::string created_at;
  std::string updated_at;
  std::vector<Transition> history;
  std::optional<ActivationReport> activation;

  tokenizer::Doc doc() const {
    return {text, extraction.sentences, extraction.spans, extraction.confidences};
  }

  bool operator==(const IntentRecord&) const = default;
};

/// FNV-1a over the canonical JSON of a span list, as 16 hex digits.
inline std::string span_key(const std::vector<Span>& spans) {
  json arr = json::array();
  for (const auto& s : spans)
    arr.push_back({s.sentence, s.token_start, s.token_end, s.group});
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : arr.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// -- JSON ------------------------------------------------------------------------

inline json span_json(const Span& s) {
  json j = pipeline::span_to_json(s);
  j["sentence"] = s.sentence;
  return j;
}

inline Span span_from(const json& j) {
  Span s = pipeline::span_from_json(j);
  s.sentence = j.value("sentence", std::size_t{0});
  return s;
}

inline json to_json(const tokenizer::Sentence& s) {
  json tokens = json::array();
  for (const auto& t : s.tokens)
    tokens.push_back({{"text", t.text}, {"char_start", t.char_start}, {"char_end", t.char_end}});
  return {{"char_start", s.char_start}, {"char_end", s.char_end}, {"tokens", tokens}, {"pos", s.pos}};
}

inline tokenizer::Sentence sentence_from(const json& j) {
  tokenizer::Sentence s;
  s.char_start = j.at("char_start").get<std::size_t>();
  s.char_end = j.at("char_end").get<std::size_t>();
  for (const auto& t : j.at("tokens"))
    s.tokens.push_back({t.at("text").get<std::string>(), t.at("char_start").get<std::size_t>(),
                        t.at("char_end").get<std::size_t>()});
  s.pos = j.at("pos").get<std::vector<std::string>>();
  return s;
}

inline json to_json(const Correction& c) {
  json spans = json::array();
  for (const auto& s : c.spans)
    spans.push_back(span_json(s));
  return {{"spans", spans}, {"author", c.author}, {"created_at", c.created_at}, {"key", c.key}};
}

inline Correction correction_from(const json& j) {
  Correction c;
  for (const auto& s : j.at("spans"))
    c.spans.push_back(span_from(s));
  c.author = j.at("author").get<std::string>();
  c.created_at = j.at("created_at").get<std::string>();
  c.key = j.at("key").get<std::string>();
  return c;
}

inline json to_json(const IntentRecord& r) {
  json sentences = json::array();
  for (const auto& s : r.extraction.sentences)
    sentences.push_back(to_json(s));
  json spans = json::array();
  for (std::size_t i = 0; i < r.extraction.spans.size(); ++i) {
    const auto& s = r.extraction.spans[i];
    json j = span_json(s);
    j["text"] = r.text.substr(s.char_start, s.char_end - s.char_start);
    j["confidence"] = r.extraction.confidences.at(i);
    spans.push_back(std::move(j));
  }
  json corrections = json::array();
  for (const auto& c : r.corrections)
    corrections.push_back(to_json(c));
  json history = json::array();
  for (const auto& t : r.history) {
    json h{{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"at", t.at}};
    if (!t.reason.empty())
      h["reason"] = t.reason;
    history.push_back(std::move(h));
  }
  json j{{"id", r.id},
         {"text", r.text},
         {"state", to_string(r.state)},
         {"extraction",
          {{"sentences", sentences},
           {"spans", spans},
           {"payload", pipeline::to_json(r.extraction.payload)}}},
         {"corrections", corrections},
         {"model_version", r.model_version},
         {"created_at", r.created_at},
         {"updated_at", r.updated_at},
         {"history", history}};
  if (r.activation) {
    j["activation"] = {{"activated", r.activation->activated},
                       {"reason", r.activation->reason},
                       {"matched_devices", r.activation->matched_devices},
                       {"at", r.activation->at}};
  }
  return j;
}

inline IntentRecord record_from(const json& j) {
  IntentRecord r;
  r.id = j.at("id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.state = state_from_string(j.at("state").get<std::string>());
  const auto& ex = j.at("extraction");
  for (const auto& s : ex.at("sentences"))
    r.extraction.sentences.push_back(sentence_from(s));
  for (const auto& s : ex.at("spans")) {
    r.extraction.spans.push_back(span_from(s));
    r.extraction.confidences.push_back(s.at("confidence").get<double>());
  }
  r.extraction.payload = pipeline::payload_from_json(ex.at("payload"));
  for (const auto& c : j.at("corrections"))
    r.corrections.push_back(correction_from(c));
  r.model_version = j.at("model_version").get<std::string>();
  r.created_at = j.at("created_at").get<std::string>();
  r.updated_at = j.at("updated_at").get<std::string>();
  for (const auto& h : j.at("history"))
    r.history.push_back({state_from_string(h.at("from").get<std::string>()),
                         state_from_string(h.at("to").get<std::string>()),
                         h.at("at").get<std::string>(), h.value("reason", std::string{})});
  if (j.contains("activation")) {
    const auto& a = j.at("activation");
    r.activation = ActivationReport{a.at("activated").get<bool>(), a.at("reason").get<std::string>(),
                                    a.at("matched_devices").get<std::vector<std::string>>(),
                                    a.at("at").get<std::string>()};
  }
  return r;
}

} // namespace ibn::service
