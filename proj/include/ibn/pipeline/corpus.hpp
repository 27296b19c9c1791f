#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibn/errors.hpp"
#include "ibn/rng.hpp"
#include "ibn/tokenizer/document.hpp"

namespace ibn::pipeline {

using tokenizer::Span;

enum class Source { generated, user_correction };

inline const char* to_string(Source s) {
  return s == Source::generated ? "generated" : "user-correction";
}

inline Source source_from_string(const std::string& s) {
  if (s == "generated")
    return Source::generated;
  if (s == "user-correction")
    return Source::user_correction;
  throw ValidationError("unknown sentence source '" + s + "'");
}

/// One sentence with word-level gold labels. Token offsets index into `text`;
/// spans carry both token and character positions.
struct LabeledSentence {
  std::string text;
  std::vector<tokenizer::Token> tokens;
  std::vector<std::string> pos;
  std::vector<Span> spans;
  Source source = Source::generated;

  std::vector<std::string> words() const {
    std::vector<std::string> w;
    w.reserve(tokens.size());
    for (const auto& t : tokens)
      w.push_back(t.text);
    return w;
  }

  tokenizer::Sentence sentence() const { return {tokens, pos, 0, text.size()}; }

  std::vector<std::string> bio() const { return tokenizer::spans_to_bio(tokens.size(), spans); }

  bool operator==(const LabeledSentence&) const = default;
};

/// A pattern such as "Show/VERB me/PRON {VENDOR} {DEVICE}". Literal words carry
/// their POS tag after a slash; braces name a slot. Fillers use the same
/// word/TAG notation, space separated for multi-word fillers.
struct IntentTemplate {
  std::string pattern;
  std::map<std::string, std::vector<std::string>> fillers;
  std::map<std::string, std::string> groups;       // slot -> span group; absent means unlabeled
  std::map<std::string, std::string> intent_fields; // slot -> payload field

  void validate() const {
    for (const auto& part : split(pattern)) {
      if (!is_slot(part))
        continue;
      const std::string slot = part.substr(1, part.size() - 2);
      auto it = fillers.find(slot);
      if (it == fillers.end() || it->second.empty())
        throw ValidationError("template slot {" + slot + "} has no fillers");
      if (!groups.count(slot))
        throw ValidationError("template slot {" + slot + "} has no span group");
    }
  }

  static bool is_slot(const std::string& part) {
    return part.size() > 2 && part.front() == '{' && part.back() == '}';
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;)
      out.push_back(w);
    return out;
  }
};

namespace detail {

inline std::pair<std::string, std::string> word_tag(const std::string& item) {
  const auto slash = item.rfind('/');
  if (slash == std::string::npos || slash == 0 || slash + 1 == item.size())
    throw ValidationError("expected word/TAG, got '" + item + "'");
  return {item.substr(0, slash), item.substr(slash + 1)};
}

struct Builder {
  LabeledSentence out;

  std::size_t append(const std::string& tagged) {
    const std::size_t first = out.tokens.size();
    for (const auto& item : IntentTemplate::split(tagged)) {
      auto [word, tag] = word_tag(item);
      if (!out.text.empty())
        out.text += ' ';
      out.tokens.push_back({word, out.text.size(), out.text.size() + word.size()});
      out.text += word;
      out.pos.push_back(tag);
    }
    return first;
  }
};

} // namespace detail

/// Expands a template with explicit filler choices (slot -> filler index).
inline LabeledSentence expand_template(const IntentTemplate& tpl,
                                       const std::map<std::string, std::size_t>& choice) {
  tpl.validate();
  detail::Builder b;
  for (const auto& part : IntentTemplate::split(tpl.pattern)) {
    if (!IntentTemplate::is_slot(part)) {
      b.append(part);
      continue;
    }
    const std::string slot = part.substr(1, part.size() - 2);
    const auto& options = tpl.fillers.at(slot);
    auto it = choice.find(slot);
    const std::size_t idx = it == choice.end() ? 0 : it->second;
    if (idx >= options.size())
      throw ValidationError("filler index out of range for {" + slot + "}");
    const std::size_t first = b.append(options[idx]);
    const std::string& group = tpl.groups.at(slot);
    if (!group.empty())
      b.out.spans.push_back({0, first, b.out.tokens.size(), b.out.tokens[first].char_start,
                             b.out.tokens.back().char_end, group});
  }
  return b.out;
}

/// The built-in network-intent templates.
inline std::vector<IntentTemplate> default_templates() {
  const std::vector<std::string> vendors{
      "Cisco/PROPN",   "Juniper/PROPN", "Arista/PROPN",   "Huawei/PROPN",
      "Nokia/PROPN",   "Palo/PROPN Alto/PROPN", "Fortinet/PROPN", "Ericsson/PROPN",
      "Mikrotik/PROPN", "Extreme/PROPN"};
  const std::vector<std::string> devices{
      "routers/NOUN",  "switches/NOUN", "firewalls/NOUN", "access/NOUN points/NOUN",
      "load/NOUN balancers/NOUN", "gateways/NOUN", "servers/NOUN", "modems/NOUN",
      "router/NOUN",   "switch/NOUN",   "firewall/NOUN"};
  const std::vector<std::string> states{"up/ADV",         "down/ADV",      "offline/ADJ",
                                        "online/ADJ",     "idle/ADJ",      "degraded/ADJ",
                                        "unreachable/ADJ", "flapping/VERB"};
  const std::vector<std::string> plural_devices{"routers/NOUN", "switches/NOUN", "firewalls/NOUN",
                                                "gateways/NOUN", "servers/NOUN", "modems/NOUN"};
  const std::vector<std::string> adverb_states{"up/ADV", "down/ADV"};
  const std::vector<std::string> since_durations{
      "a/DET year/NOUN", "two/NUM days/NOUN", "yesterday/NOUN", "last/ADJ week/NOUN",
      "an/DET hour/NOUN", "5/NUM minutes/NOUN", "three/NUM months/NOUN", "monday/PROPN"};
  const std::vector<std::string> count_durations{
      "2/NUM hours/NOUN", "10/NUM minutes/NOUN", "3/NUM days/NOUN", "5/NUM hours/NOUN",
      "30/NUM minutes/NOUN", "2/NUM weeks/NOUN", "one/NUM hour/NOUN", "24/NUM hours/NOUN"};
  const std::vector<std::string> window_durations{"hour/NOUN", "day/NOUN", "week/NOUN",
                                                  "month/NOUN", "24/NUM hours/NOUN",
                                                  "7/NUM days/NOUN"};
  const std::vector<std::string> metrics{
      "cpu/NOUN usage/NOUN", "latency/NOUN", "bandwidth/NOUN", "packet/NOUN loss/NOUN",
      "throughput/NOUN",     "memory/NOUN utilization/NOUN", "jitter/NOUN", "uptime/NOUN"};
  const std::vector<std::string> counts{"2/NUM", "3/NUM",   "5/NUM",   "10/NUM",   "20/NUM",
                                        "50/NUM", "two/NUM", "three/NUM", "ten/NUM"};
  const std::vector<std::string> locations{
      "Paris/PROPN", "London/PROPN", "Berlin/PROPN", "Tokyo/PROPN",  "New/PROPN York/PROPN",
      "San/PROPN Jose/PROPN", "Madrid/PROPN", "Lyon/PROPN", "building/NOUN 4/NUM",
      "rack/NOUN 12/NUM"};
  const std::vector<std::string> vlans{"10/NUM", "20/NUM", "100/NUM", "200/NUM",
                                       "300/NUM", "42/NUM", "4000/NUM", "15/NUM"};

  const std::map<std::string, std::string> groups{
      {"VENDOR", "VENDOR"},     {"DEVICE", "DEVICE"},     {"METRIC", "METRIC"},
      {"STATE", "STATE"},       {"DURATION", "DURATION"}, {"COUNT", "COUNT"},
      {"LOCATION", "LOCATION"}, {"VLAN_ID", "VLAN_ID"}};
  const std::map<std::string, std::string> fields{
      {"VENDOR", "targets.vendor"},     {"DEVICE", "targets.device_type"},
      {"METRIC", "filters.metric"},     {"STATE", "filters.state"},
      {"DURATION", "filters.duration"}, {"COUNT", "filters.count"},
      {"LOCATION", "filters.location"}, {"VLAN_ID", "filters.vlan_id"}};
  const std::map<std::string, std::vector<std::string>> base{
      {"VENDOR", vendors},   {"DEVICE", devices},     {"METRIC", metrics},
      {"STATE", states},     {"DURATION", since_durations}, {"COUNT", counts},
      {"LOCATION", locations}, {"VLAN_ID", vlans}};

  auto make = [&](std::string pattern,
                  std::map<std::string, std::vector<std::string>> overrides = {}) {
    IntentTemplate t{std::move(pattern), base, groups, fields};
    for (auto& [slot, values] : overrides)
      t.fillers[slot] = std::move(values);
    t.validate();
    return t;
  };

  return {
      make("Show/VERB me/PRON {VENDOR} {DEVICE} {STATE} since/SCONJ {DURATION}"),
      make("How/SCONJ many/ADJ {DEVICE} are/AUX {STATE} for/ADP more/ADJ than/ADP {DURATION} ?/PUNCT",
           {{"DEVICE", plural_devices}, {"STATE", adverb_states}, {"DURATION", count_durations}}),
      make("List/VERB all/DET {DEVICE} in/ADP {LOCATION}"),
      make("Display/VERB the/DET {METRIC} of/ADP {VENDOR} {DEVICE} in/ADP {LOCATION}"),
      make("Configure/VERB vlan/NOUN {VLAN_ID} on/ADP {VENDOR} {DEVICE}"),
      make("Deploy/VERB {COUNT} {VENDOR} {DEVICE} in/ADP {LOCATION}"),
      make("Count/VERB the/DET {DEVICE} that/PRON are/AUX {STATE} in/ADP {LOCATION}"),
      make("Set/VERB the/DET {METRIC} limit/NOUN of/ADP {DEVICE} in/ADP {LOCATION} to/ADP "
           "{COUNT} percent/NOUN"),
      make("Get/VERB the/DET {METRIC} of/ADP {VENDOR} {DEVICE} over/ADP the/DET last/ADJ {DURATION}",
           {{"DURATION", window_durations}}),
      make("Assign/VERB vlan/NOUN {VLAN_ID} to/ADP the/DET {DEVICE} in/ADP {LOCATION}"),
      make("Enable/VERB {VENDOR} {DEVICE} in/ADP {LOCATION} with/ADP vlan/NOUN {VLAN_ID}"),
      make("Which/DET {VENDOR} {DEVICE} are/AUX {STATE} in/ADP {LOCATION} ?/PUNCT"),
      make("How/SCONJ many/ADJ {DEVICE} in/ADP {LOCATION} have/VERB {METRIC} above/ADP {COUNT} "
           "percent/NOUN ?/PUNCT"),
      make("Update/VERB the/DET {DEVICE} on/ADP vlan/NOUN {VLAN_ID} that/PRON were/AUX {STATE} "
           "for/ADP {DURATION}",
           {{"DURATION", count_durations}}),
  };
}

/// Samples `n` sentences: a uniformly chosen template, then a uniformly chosen
/// filler for each slot. Deterministic given the generator state.
inline std::vector<LabeledSentence> generate_corpus(const std::vector<IntentTemplate>& templates,
                                                    Rng& rng, std::size_t n) {
  if (n == 0)
    throw ValidationError("generate_corpus needs n >= 1");
  if (templates.empty())
    throw ValidationError("generate_corpus needs at least one template");
  for (const auto& t : templates)
    t.validate();
  std::vector<LabeledSentence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tpl = templates[rng.index(templates.size())];
    std::map<std::string, std::size_t> choice;
    for (const auto& [slot, options] : tpl.fillers)
      choice[slot] = rng.index(options.size());
    out.push_back(expand_template(tpl, choice));
  }
  return out;
}

// -- JSON lines ----------------------------------------------------------------

inline nlohmann::json span_to_json(const Span& s) {
  return {{"group", s.group},
          {"token_start", s.token_start},
          {"token_end", s.token_end},
          {"char_start", s.char_start},
          {"char_end", s.char_end}};
}

inline Span span_from_json(const nlohmann::json& j) {
  Span s;
  s.group = j.at("group").get<std::string>();
  s.token_start = j.at("token_start").get<std::size_t>();
  s.token_end = j.at("token_end").get<std::size_t>();
  s.char_start = j.value("char_start", std::size_t{0});
  s.char_end = j.value("char_end", std::size_t{0});
  return s;
}

inline nlohmann::json to_json(const LabeledSentence& s) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : s.tokens)
    tokens.push_back(t.text);
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& sp : s.spans)
    spans.push_back(span_to_json(sp));
  nlohmann::json j{{"text", s.text}, {"tokens", tokens}, {"pos", s.pos}, {"spans", spans}};
  if (s.source != Source::generated)
    j["source"] = to_string(s.source);
  return j;
}

/// Token offsets are recovered by locating each token in the text in order.
inline LabeledSentence sentence_from_json(const nlohmann::json& j) {
  LabeledSentence s;
  s.text = j.at("text").get<std::string>();
  std::size_t cursor = 0;
  for (const auto& tj : j.at("tokens")) {
    const std::string tok = tj.get<std::string>();
    const auto at = s.text.find(tok, cursor);
    if (tok.empty() || at == std::string::npos)
      throw ValidationError("token '" + tok + "' not found in text '" + s.text + "'");
    s.tokens.push_back({tok, at, at + tok.size()});
    cursor = at + tok.size();
  }
  if (j.contains("pos"))
    s.pos = j.at("pos").get<std::vector<std::string>>();
  if (!s.pos.empty() && s.pos.size() != s.tokens.size())
    throw ValidationError("pos tags do not align with tokens in '" + s.text + "'");
  for (const auto& sj : j.value("spans", nlohmann::json::array()))
    s.spans.push_back(span_from_json(sj));
  tokenizer::validate_spans(s.tokens.size(), s.spans);
  if (j.contains("source"))
    s.source = source_from_string(j.at("source").get<std::string>());
  return s;
}

inline void write_jsonl(const std::string& path, const std::vector<LabeledSentence>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write corpus " + path);
  for (const auto& s : data)
    out << to_json(s).dump() << '\n';
  if (!out)
    throw IoError("write failed for " + path);
}

inline std::vector<LabeledSentence> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open corpus " + path);
  std::vector<LabeledSentence> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty())
      continue;
    try {
      out.push_back(sentence_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<std::string> texts(const std::vector<LabeledSentence>& data) {
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& s : data)
    out.push_back(s.text);
  return out;
}

} // namespace ibn::pipeline
