#pragma once

// Named design parameters shared by the selector checklist, the session,
// the HTTP endpoints and the command line. A per-test schema lists the
// accepted names in checklist order; prepare() turns a name -> value map
// into a SolveRequest, applying defaults and collecting every field error.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "powerlab/design.hpp"

namespace powerlab::inputs {

enum class FieldType { number, integer, choice, number_list };

enum class Role { effect, variability, design, error_rate, target };

struct FieldDef {
  std::string_view name;
  FieldType type = FieldType::number;
  Role role = Role::effect;
  std::string_view description;
  std::optional<double> minimum;
  std::optional<double> maximum;
  bool exclusive_minimum = false;
  bool exclusive_maximum = false;
  std::vector<std::string_view> choices;
  bool probability = false;  // accepts percent notation
};

const std::vector<FieldDef>& catalog();
const FieldDef* find_field(std::string_view name);

/// Closest catalog name by edit distance, for "did you mean" hints.
std::string nearest_field(std::string_view name);
std::size_t edit_distance(std::string_view a, std::string_view b);

/// One entry of a test's input schema.
struct SchemaEntry {
  std::string name;
  std::optional<std::string> default_text;   // shown in checklists, e.g. "0.05"
  std::vector<std::string> alternatives;     // names that can stand in for this one
  bool required_for_sample_size = true;
  bool required_for_power = true;
  bool required_for_effect = true;
};

/// Accepted inputs of a test in checklist order: effect, variability,
/// design/allocation, then alpha, tails, power and n.
std::vector<SchemaEntry> schema(TestId test);

/// Every accepted name including alternatives and the target selector.
std::vector<std::string> accepted_names(TestId test);

using ParamValue = std::variant<double, std::string, std::vector<double>>;
using ParamMap = std::map<std::string, ParamValue, std::less<>>;

std::string format_value(const ParamValue& v);

/// Type and range problem of a single value, if any.
std::optional<std::string> check_value(std::string_view name, const ParamValue& value);

struct Prepared {
  SolveRequest request;
  ParamMap inputs;                            // supplied values plus defaults
  std::vector<std::string> defaults_applied;  // names filled from defaults
};

/// Validates and converts. Throws InvalidSpec listing every problem.
Prepared prepare(TestId test, const ParamMap& params);

/// Names still needed before a request of this target can be prepared.
std::vector<std::string> missing(TestId test, Target target, const ParamMap& known);

/// Checklist names for (test, target): schema entries that matter for the
/// target, in order.
std::vector<SchemaEntry> checklist(TestId test, Target target);

inline constexpr double kDefaultPsi = 1.0;
inline constexpr double kDefaultRho2 = 0.0;

}  // namespace powerlab::inputs
