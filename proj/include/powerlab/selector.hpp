#pragma once

// Decision tree from a structured study description to a recommended test
// and the parameters it still needs.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "powerlab/design.hpp"
#include "powerlab/inputs.hpp"

namespace powerlab::selector {

enum class Outcome { continuous, binary, time_to_event, correlation };
enum class Pairing { independent, paired };
enum class Comparison { vs_constant, between_groups };
enum class Assumption { parametric, nonparametric, unspecified };

std::string_view to_string(Outcome v);
std::string_view to_string(Pairing v);
std::string_view to_string(Comparison v);
std::string_view to_string(Assumption v);
std::optional<Outcome> outcome_from_string(std::string_view s);
std::optional<Pairing> pairing_from_string(std::string_view s);
std::optional<Comparison> comparison_from_string(std::string_view s);
std::optional<Assumption> assumption_from_string(std::string_view s);

struct StudyDescriptor {
  Outcome outcome = Outcome::continuous;
  int n_groups = 2;
  Pairing pairing = Pairing::independent;
  Comparison comparison = Comparison::between_groups;
  Assumption assumption = Assumption::unspecified;
  bool covariate_adjusted = false;

  friend bool operator==(const StudyDescriptor&, const StudyDescriptor&) = default;
};

struct Alternative {
  TestId test;
  std::string reason;
  friend bool operator==(const Alternative&, const Alternative&) = default;
};

struct ChecklistItem {
  std::string name;
  std::string description;
  std::optional<std::string> default_text;
  std::vector<std::string> alternatives;
  friend bool operator==(const ChecklistItem&, const ChecklistItem&) = default;
};

struct Recommendation {
  TestId test;
  std::string rationale;
  std::vector<ChecklistItem> required_params;
  std::vector<Alternative> alternatives;
  friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

class IncoherentDescriptor : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reason the descriptor is incoherent, or nullopt when it is coherent.
std::optional<std::string> incoherence(const StudyDescriptor& d);

/// Throws IncoherentDescriptor with the reason.
Recommendation select(const StudyDescriptor& d);

/// Sample-size checklist: effect parameters, variability, allocation, then
/// alpha, tails and power.
std::vector<ChecklistItem> checklist(TestId test);
std::vector<ChecklistItem> checklist(TestId test, Target target);
/// Throws std::invalid_argument for an unknown name.
std::vector<ChecklistItem> checklist(std::string_view test_name);

/// All coherent descriptors with up to `max_groups` groups.
std::vector<StudyDescriptor> enumerate_coherent(int max_groups = 6);

}  // namespace powerlab::selector
