#pragma once

// Command grammar for the elicitation session.
//
//   command    := describe | choose | set | unset | solve | whatif | explain | export
//   describe   := "describe" (key "=" word | word | INT "groups")+
//   choose     := "choose" TEST
//   set        := "set" assignment (("," | "and")? assignment)*
//   whatif     := "whatif" assignment (("," | "and")? assignment)*
//   assignment := PARAM "="? value
//   value      := NUMBER ["%"] | WORD | "[" NUMBER ("," NUMBER)* "]"
//   unset      := "unset" PARAM+
//   solve      := "solve" [("n" | "sample_size" | "power" | "effect")]
//   explain    := "explain" [WORD]
//   export     := "export"
//
// Parameter names are case-insensitive and accept a few aliases (baseline
// for p0, hazard-ratio for hr, ...). "arr" / "absolute-risk-reduction" is
// kept as a derived assignment and resolved to p1 = p0 - arr when applied.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "powerlab/design.hpp"
#include "powerlab/inputs.hpp"

namespace powerlab::session {

enum class Verb { describe, choose, set, unset, solve, whatif, explain, export_transcript };

std::string_view to_string(Verb v);

using Assignment = std::pair<std::string, inputs::ParamValue>;

struct Command {
  Verb verb = Verb::explain;
  std::map<std::string, std::string> descriptor;  // describe
  std::optional<TestId> test;                     // choose
  std::vector<Assignment> assignments;            // set, whatif
  std::vector<std::string> names;                 // unset
  std::optional<Target> target;                   // solve
  std::string topic;                              // explain

  friend bool operator==(const Command&, const Command&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, std::size_t position, std::vector<std::string> expected);
  [[nodiscard]] std::size_t position() const noexcept { return position_; }
  [[nodiscard]] const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

/// Derived parameter: p1 = p0 - value.
inline constexpr std::string_view kRiskReduction = "arr";

Command parse_command(std::string_view text);

/// Canonical text that parses back to an equal Command.
std::string to_text(const Command& cmd);

/// Canonical parameter name for a user-typed name or alias, if any.
std::optional<std::string> canonical_param(std::string_view name);

/// Decimal text with a trailing percent moved two places left, so that
/// "18%" and "0.18" convert to the same double.
std::string shift_percent(std::string_view digits);

}  // namespace powerlab::session
