#pragma once

// Test identities, per-test design inputs, and solve requests/results.

#include <array>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "powerlab/dist.hpp"

namespace powerlab {

using dist::Probability;

enum class TestId {
  one_sample_t,
  two_sample_t,
  paired_t,
  one_way_anova,
  one_proportion_z,
  two_proportions_z,
  chi_square,
  correlation,
  mann_whitney,
  paired_wilcoxon,
  kruskal_wallis,
  log_rank,
  cox_ph,
};

inline constexpr std::array kAllTests = {
    TestId::one_sample_t,     TestId::two_sample_t,      TestId::paired_t,
    TestId::one_way_anova,    TestId::one_proportion_z,  TestId::two_proportions_z,
    TestId::chi_square,       TestId::correlation,       TestId::mann_whitney,
    TestId::paired_wilcoxon,  TestId::kruskal_wallis,    TestId::log_rank,
    TestId::cox_ph,
};

std::string_view to_string(TestId id);
std::optional<TestId> test_from_string(std::string_view name);

bool is_nonparametric(TestId id);
/// Parametric counterpart of a rank test; identity for the others.
TestId parametric_parent(TestId id);
/// F, chi-square and Kruskal-Wallis tests are omnibus upper-tail tests.
bool is_omnibus(TestId id);

enum class Tails { one, two };
std::string_view to_string(Tails t);

enum class Target { sample_size, power, effect };
std::string_view to_string(Target t);
std::optional<Target> target_from_string(std::string_view name);

/// Mean difference designs (t-family and their rank counterparts).
/// For paired designs `sd` is the SD of within-pair differences.
struct MeanDesign {
  double delta = 0.0;
  double sd = 1.0;
  double ratio = 1.0;  // n2 / n1, two-sample only

  [[nodiscard]] double standardized() const { return delta / sd; }

  friend bool operator==(const MeanDesign&, const MeanDesign&) = default;
};

/// One-way layout with k equal groups and Cohen's f.
struct AnovaDesign {
  int k = 2;
  double f = 0.0;

  friend bool operator==(const AnovaDesign&, const AnovaDesign&) = default;
};

struct ProportionDesign {
  double p0 = 0.5;
  double p1 = 0.5;
  double ratio = 1.0;  // n2 / n1, two-sample only

  friend bool operator==(const ProportionDesign&, const ProportionDesign&) = default;
};

struct ChiSquareDesign {
  double w = 0.0;
  int df = 1;

  friend bool operator==(const ChiSquareDesign&, const ChiSquareDesign&) = default;
};

struct CorrelationDesign {
  double r = 0.0;

  friend bool operator==(const CorrelationDesign&, const CorrelationDesign&) = default;
};

/// Log-rank and Cox designs. `hr` is experimental over control.
struct SurvivalDesign {
  double hr = 1.0;
  double pE = 1.0;
  double pC = 1.0;
  double ratio_k = 1.0;  // nE / nC
  std::optional<double> exposure_prev;
  std::optional<double> sigma;
  double psi = 1.0;
  double rho2 = 0.0;

  friend bool operator==(const SurvivalDesign&, const SurvivalDesign&) = default;
};

using DesignInput =
    std::variant<MeanDesign, AnovaDesign, ProportionDesign, ChiSquareDesign, CorrelationDesign, SurvivalDesign>;

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kDefaultAre = 0.864;

struct TestSpec {
  TestId test = TestId::two_sample_t;
  DesignInput params = MeanDesign{};
  Probability alpha{kDefaultAlpha};
  Tails tails = Tails::two;
  double are = kDefaultAre;  // rank tests only

  friend bool operator==(const TestSpec&, const TestSpec&) = default;
};

/// Per-arm sample sizes. Single-sample designs have one entry; one-way
/// layouts have k entries; two-arm survival designs list [nE, nC].
struct Allocation {
  std::vector<long> arms;

  [[nodiscard]] long total() const { return std::accumulate(arms.begin(), arms.end(), 0L); }
  [[nodiscard]] long first() const { return arms.empty() ? 0 : arms.front(); }
  friend bool operator==(const Allocation&, const Allocation&) = default;
};

struct SolveRequest {
  TestSpec spec;
  Target target = Target::sample_size;
  std::optional<Probability> power_goal;
  std::optional<long> n_fixed;

  friend bool operator==(const SolveRequest&, const SolveRequest&) = default;
};

struct SolveResult {
  TestId test = TestId::two_sample_t;
  Target target = Target::sample_size;
  Allocation allocation;
  double achieved_power = 0.0;
  std::optional<long> events_required;
  std::optional<double> effect_solved;
  std::string effect_field;
  std::string formula_id;
  long index = 0;  // position on the test's allocation ladder

  friend bool operator==(const SolveResult&, const SolveResult&) = default;
};

struct FieldError {
  std::string field;
  std::string message;
  friend bool operator==(const FieldError&, const FieldError&) = default;
};

/// Invalid TestSpec; carries field-level diagnostics.
class InvalidSpec : public std::invalid_argument {
 public:
  explicit InvalidSpec(std::vector<FieldError> errors);
  [[nodiscard]] const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

/// The requested power cannot be reached (degenerate effect, goal >= 1,
/// bounded power curve, or total confounding).
class Unreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace powerlab
