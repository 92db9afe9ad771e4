#pragma once

// Elicitation state machine. apply() is a pure transition: the same state,
// command and clock value always give the same next state and reply, so a
// session can be rebuilt by replaying its history.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "powerlab/command.hpp"
#include "powerlab/design.hpp"
#include "powerlab/inputs.hpp"
#include "powerlab/selector.hpp"

namespace powerlab::session {

struct Reply {
  bool ok = true;
  std::string explanation;
  std::optional<std::string> prompt;  // next missing parameter question
  std::vector<std::string> pending;
  std::vector<FieldError> errors;
  std::vector<std::string> assumed;  // defaults adopted by this command
  std::optional<selector::Recommendation> recommendation;
  std::optional<SolveResult> result;
  std::string transcript;  // export only

  friend bool operator==(const Reply&, const Reply&) = default;
};

struct HistoryEntry {
  Command command;
  Reply reply;
  std::int64_t at_ms = 0;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct SessionState {
  std::string id;
  std::map<std::string, std::string> descriptor;
  std::optional<TestId> chosen_test;
  inputs::ParamMap known;
  std::vector<std::string> pending;
  Target target = Target::sample_size;
  std::vector<HistoryEntry> history;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

SessionState fresh(std::string id, std::int64_t now_ms);

struct Transition {
  SessionState state;
  Reply reply;
};

Transition apply(const SessionState& state, const Command& cmd, std::int64_t now_ms);

/// Folds the recorded commands of `state` over a fresh session.
SessionState replay(const SessionState& state);

/// Checklist names for the chosen test and target not yet covered by the
/// known values (an alternative name covers its entry).
std::vector<std::string> pending_for(TestId test, Target target, const inputs::ParamMap& known);

/// StudyDescriptor from a partial descriptor map; nullopt without an outcome.
std::optional<selector::StudyDescriptor> complete_descriptor(const std::map<std::string, std::string>& partial);

std::string transcript(const SessionState& state);

/// Parameters a solve of `state` sends to the engine: the known values
/// relevant to the current target plus the target itself.
inputs::ParamMap request_params(const SessionState& state);

}  // namespace powerlab::session
