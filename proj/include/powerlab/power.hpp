#pragma once

// Power functions and solvers for sample size, achieved power and minimal
// detectable effect.
//
// Every test has an allocation ladder: allocation_for(spec, i) maps an
// integer index i >= minimum_index(spec) to per-arm sizes, and power is
// nondecreasing along the ladder. solve_n returns the first rung whose power
// reaches the goal. For most tests the index is the first arm's size; rank
// tests climb the parent test's ladder with each arm inflated by 1/ARE, and
// the log-rank and Cox sizes come from their closed forms.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "powerlab/design.hpp"

namespace powerlab::power {

std::vector<FieldError> validate(const TestSpec& spec);
void require_valid(const TestSpec& spec);

long minimum_index(const TestSpec& spec);
Allocation allocation_for(const TestSpec& spec, long index);

/// Allocation of a study whose reference arm has n subjects (first arm for
/// two-sample designs, control arm for log-rank, total for single-sample
/// designs, per group for one-way layouts).
Allocation allocation_from_n(const TestSpec& spec, long n);
long minimum_n(const TestSpec& spec);

double power_of(const TestSpec& spec, const Allocation& n);

SolveResult solve_n(const TestSpec& spec, Probability goal);
SolveResult solve_power(const TestSpec& spec, long n_fixed);
SolveResult solve_effect(const TestSpec& spec, long n_fixed, Probability goal);
SolveResult solve(const SolveRequest& request);

/// Freedman total events for the log-rank test (rounded up).
long logrank_events(const SurvivalDesign& design, Probability alpha, Probability goal,
                    Tails tails = Tails::two);
SolveResult logrank_n(const SurvivalDesign& design, Probability alpha, Probability goal,
                      Tails tails = Tails::two);
SolveResult cox_ph_n(const SurvivalDesign& design, Probability alpha, Probability goal,
                     Tails tails = Tails::two);
SolveResult nonparametric_n(const TestSpec& spec, Probability goal);

/// Next smaller candidate allocation below a sample-size result, or nullopt
/// at the structural minimum.
std::optional<Allocation> previous_allocation(const TestSpec& spec, const SolveResult& result);

std::string formula_id(const TestSpec& spec);

/// Name of the design field solve_effect searches over.
std::string_view effect_field(TestId test);
double effect_value(const TestSpec& spec);
TestSpec with_effect(const TestSpec& spec, double value);

/// Labels for the entries of Allocation::arms.
std::vector<std::string> arm_labels(const TestSpec& spec);

}  // namespace powerlab::power
