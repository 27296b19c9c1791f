#pragma once

#include <array>
#include <string>
#include <utility>

#include "ibn/errors.hpp"

namespace ibn::service {

enum class IntentState { received, recognized, needs_refinement, translated, activated, failed };

inline constexpr std::array<IntentState, 6> kAllStates{
    IntentState::received,   IntentState::recognized, IntentState::needs_refinement,
    IntentState::translated, IntentState::activated,  IntentState::failed};

inline const char* to_string(IntentState s) {
  switch (s) {
  case IntentState::received:
    return "RECEIVED";
  case IntentState::recognized:
    return "RECOGNIZED";
  case IntentState::needs_refinement:
    return "NEEDS_REFINEMENT";
  case IntentState::translated:
    return "TRANSLATED";
  case IntentState::activated:
    return "ACTIVATED";
  case IntentState::failed:
    return "FAILED";
  }
  return "?";
}

inline IntentState state_from_string(const std::string& s) {
  for (IntentState st : kAllStates)
    if (s == to_string(st))
      return st;
  throw ValidationError("unknown intent state '" + s + "'");
}

/// Edges of the intent lifecycle. FAILED is reachable from every state but is
/// itself terminal, as is ACTIVATED apart from failing.
inline bool is_legal_transition(IntentState from, IntentState to) {
  using S = IntentState;
  if (to == S::failed)
    return from != S::failed;
  switch (from) {
  case S::received:
    return to == S::recognized;
  case S::recognized:
    return to == S::needs_refinement || to == S::translated;
  case S::needs_refinement:
    return to == S::recognized;
  case S::translated:
    return to == S::activated;
  default:
    return false;
  }
}

inline void require_transition(IntentState from, IntentState to) {
  if (!is_legal_transition(from, to))
    throw StateError(std::string("illegal transition ") + to_string(from) + " -> " + to_string(to));
}

} // namespace ibn::service
