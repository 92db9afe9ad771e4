#include "powerlab/design.hpp"

#include <fmt/format.h>

namespace powerlab {

std::string_view to_string(TestId id) {
  switch (id) {
    case TestId::one_sample_t: return "one_sample_t";
    case TestId::two_sample_t: return "two_sample_t";
    case TestId::paired_t: return "paired_t";
    case TestId::one_way_anova: return "one_way_anova";
    case TestId::one_proportion_z: return "one_proportion_z";
    case TestId::two_proportions_z: return "two_proportions_z";
    case TestId::chi_square: return "chi_square";
    case TestId::correlation: return "correlation";
    case TestId::mann_whitney: return "mann_whitney";
    case TestId::paired_wilcoxon: return "paired_wilcoxon";
    case TestId::kruskal_wallis: return "kruskal_wallis";
    case TestId::log_rank: return "log_rank";
    case TestId::cox_ph: return "cox_ph";
  }
  return "?";
}

std::optional<TestId> test_from_string(std::string_view name) {
  for (TestId id : kAllTests) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

bool is_nonparametric(TestId id) {
  return id == TestId::mann_whitney || id == TestId::paired_wilcoxon || id == TestId::kruskal_wallis;
}

TestId parametric_parent(TestId id) {
  switch (id) {
    case TestId::mann_whitney: return TestId::two_sample_t;
    case TestId::paired_wilcoxon: return TestId::paired_t;
    case TestId::kruskal_wallis: return TestId::one_way_anova;
    default: return id;
  }
}

bool is_omnibus(TestId id) {
  return id == TestId::one_way_anova || id == TestId::chi_square || id == TestId::kruskal_wallis;
}

std::string_view to_string(Tails t) { return t == Tails::one ? "one" : "two"; }

std::string_view to_string(Target t) {
  switch (t) {
    case Target::sample_size: return "sample_size";
    case Target::power: return "power";
    case Target::effect: return "effect";
  }
  return "?";
}

std::optional<Target> target_from_string(std::string_view name) {
  if (name == "sample_size" || name == "n") return Target::sample_size;
  if (name == "power") return Target::power;
  if (name == "effect") return Target::effect;
  return std::nullopt;
}

namespace {
std::string join_errors(const std::vector<FieldError>& errors) {
  std::string out = "invalid test design";
  for (const auto& e : errors) out += fmt::format("; {}: {}", e.field, e.message);
  return out;
}
}  // namespace

InvalidSpec::InvalidSpec(std::vector<FieldError> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

}  // namespace powerlab
