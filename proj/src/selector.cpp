#include "powerlab/selector.hpp"

#include <array>

#include <fmt/format.h>

namespace powerlab::selector {

namespace {

template <class E, std::size_t N>
std::optional<E> lookup(std::string_view s, const std::array<E, N>& values) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

constexpr std::array kOutcomes = {Outcome::continuous, Outcome::binary, Outcome::time_to_event, Outcome::correlation};
constexpr std::array kPairings = {Pairing::independent, Pairing::paired};
constexpr std::array kComparisons = {Comparison::vs_constant, Comparison::between_groups};
constexpr std::array kAssumptions = {Assumption::parametric, Assumption::nonparametric, Assumption::unspecified};

TestId rank_counterpart(TestId t) {
  switch (t) {
    case TestId::one_sample_t:
    case TestId::paired_t: return TestId::paired_wilcoxon;
    case TestId::two_sample_t: return TestId::mann_whitney;
    case TestId::one_way_anova: return TestId::kruskal_wallis;
    default: return t;
  }
}

std::string_view test_label(TestId t) {
  switch (t) {
    case TestId::one_sample_t: return "one-sample t-test";
    case TestId::two_sample_t: return "two-sample t-test";
    case TestId::paired_t: return "paired t-test";
    case TestId::one_way_anova: return "one-way ANOVA";
    case TestId::one_proportion_z: return "one-proportion z-test";
    case TestId::two_proportions_z: return "two-proportions z-test";
    case TestId::chi_square: return "chi-square test";
    case TestId::correlation: return "correlation test (Fisher z)";
    case TestId::mann_whitney: return "Mann-Whitney test";
    case TestId::paired_wilcoxon: return "Wilcoxon signed-rank test";
    case TestId::kruskal_wallis: return "Kruskal-Wallis test";
    case TestId::log_rank: return "log-rank test";
    case TestId::cox_ph: return "Cox proportional hazards model";
  }
  return "?";
}

// Parametric choice before any rank-test swap.
TestId parametric_choice(const StudyDescriptor& d) {
  switch (d.outcome) {
    case Outcome::continuous:
      if (d.pairing == Pairing::paired) return TestId::paired_t;
      if (d.n_groups == 1) return TestId::one_sample_t;
      return d.n_groups == 2 ? TestId::two_sample_t : TestId::one_way_anova;
    case Outcome::binary:
      if (d.n_groups == 1) return TestId::one_proportion_z;
      return d.n_groups == 2 ? TestId::two_proportions_z : TestId::chi_square;
    case Outcome::time_to_event: return d.covariate_adjusted ? TestId::cox_ph : TestId::log_rank;
    case Outcome::correlation: return TestId::correlation;
  }
  return TestId::two_sample_t;
}

std::string describe(const StudyDescriptor& d) {
  return fmt::format("{} outcome, {} group{}, {}, {}", to_string(d.outcome), d.n_groups, d.n_groups == 1 ? "" : "s",
                     to_string(d.pairing), d.comparison == Comparison::vs_constant ? "compared with a fixed value"
                                                                                   : "compared between groups");
}

}  // namespace

std::string_view to_string(Outcome v) {
  switch (v) {
    case Outcome::continuous: return "continuous";
    case Outcome::binary: return "binary";
    case Outcome::time_to_event: return "time_to_event";
    case Outcome::correlation: return "correlation";
  }
  return "?";
}
std::string_view to_string(Pairing v) { return v == Pairing::paired ? "paired" : "independent"; }
std::string_view to_string(Comparison v) { return v == Comparison::vs_constant ? "vs_constant" : "between_groups"; }
std::string_view to_string(Assumption v) {
  switch (v) {
    case Assumption::parametric: return "parametric";
    case Assumption::nonparametric: return "nonparametric";
    case Assumption::unspecified: return "unspecified";
  }
  return "?";
}
std::optional<Outcome> outcome_from_string(std::string_view s) { return lookup(s, kOutcomes); }
std::optional<Pairing> pairing_from_string(std::string_view s) { return lookup(s, kPairings); }
std::optional<Comparison> comparison_from_string(std::string_view s) { return lookup(s, kComparisons); }
std::optional<Assumption> assumption_from_string(std::string_view s) { return lookup(s, kAssumptions); }

std::optional<std::string> incoherence(const StudyDescriptor& d) {
  if (d.n_groups < 1) return "n_groups must be at least 1";
  if (d.covariate_adjusted && d.outcome != Outcome::time_to_event) {
    return "covariate adjustment is only modelled for time-to-event outcomes";
  }
  if (d.pairing == Pairing::paired && d.n_groups > 2) return "paired designs need one or two groups";
  switch (d.outcome) {
    case Outcome::correlation:
      if (d.n_groups != 1) return "a correlation is measured within a single group";
      if (d.pairing == Pairing::paired) return "a correlation has no pairing";
      if (d.comparison != Comparison::vs_constant) return "a correlation is tested against zero";
      return std::nullopt;
    case Outcome::time_to_event:
      if (d.n_groups != 2) return "survival comparisons need exactly two groups";
      if (d.pairing == Pairing::paired) return "paired survival designs are not supported";
      if (d.comparison != Comparison::between_groups) return "survival is compared between groups";
      return std::nullopt;
    case Outcome::binary:
      if (d.pairing == Pairing::paired) return "paired binary outcomes (McNemar) are not supported";
      break;
    case Outcome::continuous: break;
  }
  if (d.pairing == Pairing::paired && d.n_groups == 2 && d.comparison != Comparison::between_groups) {
    return "two paired groups are compared with each other";
  }
  if (d.pairing == Pairing::independent) {
    if (d.n_groups == 1 && d.comparison != Comparison::vs_constant) return "a single group is compared with a fixed value";
    if (d.n_groups > 1 && d.comparison != Comparison::between_groups) return "several groups are compared with each other";
  }
  return std::nullopt;
}

Recommendation select(const StudyDescriptor& d) {
  if (auto why = incoherence(d)) throw IncoherentDescriptor(*why);

  const TestId parametric = parametric_choice(d);
  const TestId rank = rank_counterpart(parametric);
  const bool has_rank = rank != parametric;

  Recommendation r;
  r.test = (d.assumption == Assumption::nonparametric && has_rank) ? rank : parametric;
  std::string why = fmt::format("{} suggests the {}", describe(d), test_label(parametric));
  if (r.test == rank && has_rank) {
    why += fmt::format("; normality is not assumed, so its rank-based counterpart, the {}, is used with sample size "
                       "inflated by the asymptotic relative efficiency",
                       test_label(rank));
    r.alternatives.push_back({parametric, fmt::format("{} if the outcome is close to normal", test_label(parametric))});
  } else {
    if (d.assumption == Assumption::nonparametric) {
      why += "; it makes no normality assumption, so no rank-based swap is needed";
    } else if (d.assumption == Assumption::unspecified && has_rank) {
      why += "; the distribution was not specified, so the parametric test is assumed";
    }
    if (has_rank) {
      r.alternatives.push_back({rank, fmt::format("{} if normality is doubtful", test_label(rank))});
    }
  }
  if (parametric == TestId::log_rank) {
    r.alternatives.push_back({TestId::cox_ph, "Cox model if the analysis will adjust for covariates"});
  } else if (parametric == TestId::cox_ph) {
    r.alternatives.push_back({TestId::log_rank, "log-rank test for an unadjusted two-arm comparison"});
  } else if (parametric == TestId::two_proportions_z) {
    r.alternatives.push_back({TestId::chi_square, "chi-square test on the 2x2 table (w effect size, df 1)"});
  }
  r.rationale = why + ".";
  r.required_params = checklist(r.test);
  return r;
}

std::vector<ChecklistItem> checklist(TestId test, Target target) {
  std::vector<ChecklistItem> out;
  for (const auto& e : inputs::checklist(test, target)) {
    const auto* def = inputs::find_field(e.name);
    out.push_back({e.name, def ? std::string(def->description) : std::string(), e.default_text, e.alternatives});
  }
  return out;
}

std::vector<ChecklistItem> checklist(TestId test) { return checklist(test, Target::sample_size); }

std::vector<ChecklistItem> checklist(std::string_view test_name) {
  auto id = test_from_string(test_name);
  if (!id) throw std::invalid_argument(fmt::format("unknown test '{}'", test_name));
  return checklist(*id);
}

std::vector<StudyDescriptor> enumerate_coherent(int max_groups) {
  std::vector<StudyDescriptor> out;
  for (Outcome o : kOutcomes) {
    for (int g = 1; g <= max_groups; ++g) {
      for (Pairing p : kPairings) {
        for (Comparison c : kComparisons) {
          for (Assumption a : kAssumptions) {
            for (bool cov : {false, true}) {
              StudyDescriptor d{o, g, p, c, a, cov};
              if (!incoherence(d)) out.push_back(d);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace powerlab::selector
