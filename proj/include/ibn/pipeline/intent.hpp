#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibn/tokenizer/document.hpp"
#include "ibn/tokenizer/text.hpp"

namespace ibn::pipeline {

struct IntentTarget {
  std::string device_type;
  std::optional<std::string> vendor;

  bool operator==(const IntentTarget&) const = default;
};

struct IntentFilters {
  std::optional<std::string> state;
  std::optional<std::string> duration;
  std::optional<std::string> location;
  std::optional<std::string> vlan_id;
  std::optional<std::string> count;
  std::optional<std::string> metric;

  bool operator==(const IntentFilters&) const = default;
};

struct IntentPayload {
  std::optional<std::string> action;
  std::vector<IntentTarget> targets;
  IntentFilters filters;
  bool needs_refinement = false;

  bool operator==(const IntentPayload&) const = default;
};

inline const std::map<std::string, std::string>& action_lexicon() {
  static const std::map<std::string, std::string> lex{
      {"show", "show"},         {"display", "show"},     {"list", "show"},
      {"get", "show"},          {"configure", "configure"}, {"enable", "configure"},
      {"deploy", "configure"},  {"count", "count"},      {"set", "set"},
      {"change", "set"},        {"assign", "set"},       {"update", "set"}};
  return lex;
}

/// Plural device nouns to singular: "switches" -> "switch", "access points" ->
/// "access point". Only the last word changes.
inline std::string singularize(const std::string& phrase) {
  const auto cut = phrase.rfind(' ');
  const std::string head = cut == std::string::npos ? "" : phrase.substr(0, cut + 1);
  std::string w = cut == std::string::npos ? phrase : phrase.substr(cut + 1);
  auto ends = [&](const std::string& suffix) {
    return w.size() > suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends("ies"))
    w = w.substr(0, w.size() - 3) + "y";
  else if (ends("ches") || ends("shes") || ends("sses") || ends("xes"))
    w.resize(w.size() - 2);
  else if (ends("s") && !ends("ss"))
    w.resize(w.size() - 1);
  return head + w;
}

namespace detail {

inline std::optional<std::string> find_action(const tokenizer::Doc& doc) {
  const auto& lex = action_lexicon();
  for (const auto& s : doc.sentences)
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const std::string w = tokenizer::to_lower(s.tokens[i].text);
      if (w == "how" && i + 1 < s.tokens.size() && tokenizer::to_lower(s.tokens[i + 1].text) == "many")
        return "count";
      if (auto it = lex.find(w); it != lex.end())
        return it->second;
    }
  return std::nullopt;
}

} // namespace detail

/// Rule-based slot filling from the NER spans of `doc`.
///
/// The action is the first lexicon verb (or "how many") in reading order. Each
/// DEVICE span becomes a target; its vendor is the VENDOR span directly before
/// it, or the only VENDOR span in the doc. Filters take the first span of
/// their group. Values are lowercased surface text.
inline IntentPayload assemble_intent(const tokenizer::Doc& doc) {
  IntentPayload p;
  p.action = detail::find_action(doc);

  auto text_of = [&](const tokenizer::Span& s) { return tokenizer::to_lower(doc.span_text(s)); };
  std::vector<const tokenizer::Span*> vendors;
  for (const auto& s : doc.spans)
    if (s.group == "VENDOR")
      vendors.push_back(&s);

  for (const auto& s : doc.spans) {
    if (s.group != "DEVICE")
      continue;
    IntentTarget t{singularize(text_of(s)), std::nullopt};
    for (const auto* v : vendors)
      if (v->sentence == s.sentence && v->token_end == s.token_start)
        t.vendor = text_of(*v);
    if (!t.vendor && vendors.size() == 1)
      t.vendor = text_of(*vendors.front());
    p.targets.push_back(std::move(t));
  }

  const std::map<std::string, std::optional<std::string> IntentFilters::*> fields{
      {"STATE", &IntentFilters::state},       {"DURATION", &IntentFilters::duration},
      {"LOCATION", &IntentFilters::location}, {"VLAN_ID", &IntentFilters::vlan_id},
      {"COUNT", &IntentFilters::count},       {"METRIC", &IntentFilters::metric}};
  for (const auto& s : doc.spans)
    if (auto it = fields.find(s.group); it != fields.end() && !(p.filters.*(it->second)))
      p.filters.*(it->second) = text_of(s);

  p.needs_refinement = !p.action || doc.spans.empty();
  return p;
}

// -- JSON ------------------------------------------------------------------------

inline nlohmann::json optional_json(const std::optional<std::string>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<std::string> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null())
    return std::nullopt;
  return j.at(key).get<std::string>();
}

inline nlohmann::json to_json(const IntentPayload& p) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : p.targets)
    targets.push_back({{"device_type", t.device_type}, {"vendor", optional_json(t.vendor)}});
  return {{"action", optional_json(p.action)},
          {"targets", targets},
          {"filters",
           {{"state", optional_json(p.filters.state)},
            {"duration", optional_json(p.filters.duration)},
            {"location", optional_json(p.filters.location)},
            {"vlan_id", optional_json(p.filters.vlan_id)},
            {"count", optional_json(p.filters.count)},
            {"metric", optional_json(p.filters.metric)}}},
          {"needs_refinement", p.needs_refinement}};
}

inline IntentPayload payload_from_json(const nlohmann::json& j) {
  IntentPayload p;
  p.action = optional_from(j, "action");
  for (const auto& t : j.at("targets"))
    p.targets.push_back({t.at("device_type").get<std::string>(), optional_from(t, "vendor")});
  const auto& f = j.at("filters");
  p.filters = {optional_from(f, "state"),   optional_from(f, "duration"),
               optional_from(f, "location"), optional_from(f, "vlan_id"),
               optional_from(f, "count"),   optional_from(f, "metric")};
  p.needs_refinement = j.at("needs_refinement").get<bool>();
  return p;
}

} // namespace ibn::pipeline
