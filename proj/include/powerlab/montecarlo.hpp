#pragma once

// Monte Carlo power estimation. Each replication draws data under the
// design's alternative, runs the test on that data and records whether it
// rejects. None of this calls the power formulas, so it serves as an
// independent check on them.
//
// Replications are grouped into fixed batches of kBatchSize. Batch b draws
// from its own mt19937_64 seeded from (seed, b). The estimate therefore
// depends only on (plan, seed), whatever the thread count.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "powerlab/design.hpp"

namespace powerlab::mc {

inline constexpr long kDefaultReplications = 100000;
inline constexpr long kBatchSize = 1000;

class Unsupported : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SimPlan {
  TestSpec spec;
  Allocation n;
  long replications = kDefaultReplications;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
};

inline constexpr std::string_view kGenerator = "mt19937_64/batch-splitmix";

struct PowerEstimate {
  double p_hat = 0.0;
  double mc_standard_error = 0.0;
  long rejections = 0;
  long replications = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const PowerEstimate&, const PowerEstimate&) = default;
};

/// sqrt(p (1 - p) / R).
double standard_error(double p, long replications);

/// Throws Unsupported for designs the simulator cannot draw (for instance a
/// rank-test ARE with no matching error distribution) and InvalidSpec for
/// invalid designs.
PowerEstimate simulate_power(const SimPlan& plan);

/// Error distribution whose rank-test efficiency relative to the t-test is
/// `are`: 0.864 parabolic, 3/pi normal, 1 uniform, 1.5 Laplace.
std::string error_distribution(double are);

/// Survival simulation model: exponential event times, entry uniform over an
/// accrual period, analysis at accrual + follow-up.
struct SurvivalModel {
  double hazard_experimental = 1.0;
  double hazard_control = 1.0;
  double accrual = 0.0;    // 0 with follow-up: fixed censoring time
  double follow_up = 0.0;  // infinite horizon when both are 0 and no censoring is needed
  bool censored = true;
  double event_prob_experimental = 1.0;  // implied by the model
  double event_prob_control = 1.0;
  bool exact = true;  // model reproduces the design's pE and pC
};

/// Calibrates the log-rank model to the design's pE and pC. The arm with the
/// lower event probability gets the lower hazard; the hazard ratio between
/// arms is max(hr, 1/hr).
SurvivalModel logrank_model(const SurvivalDesign& d);

/// Event probability at hazard `rate` for entry uniform on [0, accrual] and
/// analysis at accrual + follow_up.
double event_probability(double rate, double accrual, double follow_up);

struct EventFractions {
  std::vector<double> fractions;  // per arm
  std::vector<long> subjects;
  std::vector<long> events;
};

/// Empirical event fractions of the log-rank or Cox simulation model.
EventFractions simulate_event_fractions(const SimPlan& plan);

/// Exact families are checked at |z| <= 3; normal-approximation and ARE
/// families may deviate up to |z| <= 5 and are flagged rather than failed.
bool is_approximate(TestId test);

struct GridPoint {
  std::string label;
  TestSpec spec;
  Probability goal{0.8};
};

/// Five points per supported test.
std::vector<GridPoint> default_grid();

enum class Verdict { pass, flag, fail };
std::string_view to_string(Verdict v);

struct RatifyRow {
  GridPoint point;
  Allocation n;
  double closed_form = 0.0;  // power formula at n
  PowerEstimate estimate;
  double z = 0.0;  // (p_hat - closed_form) / SE
  double lower = 0.0;
  double upper = 0.0;
  Verdict verdict = Verdict::pass;
};

struct SizeRow {
  GridPoint point;  // null version of the grid point
  Allocation n;
  PowerEstimate estimate;
  double z = 0.0;  // (p_hat - alpha) / SE at alpha
  bool pass = true;
};

struct RatifyOptions {
  long replications = kDefaultReplications;
  std::uint64_t seed = 20240601;
  int threads = 0;
};

/// For each point: n = solve_n(goal), then checks p_hat against
/// [goal - 3 SE, closed_form(n) + 3 SE].
std::vector<RatifyRow> ratify(const std::vector<GridPoint>& grid, const RatifyOptions& opt);

/// The grid's designs with the effect set to null, simulated at the n
/// solved for the alternative; pass when |p_hat - alpha| <= 3 SE.
std::vector<SizeRow> size_suite(const std::vector<GridPoint>& grid, const RatifyOptions& opt);

/// Same design with a null effect (hr = 1, p1 = p0, delta = 0, ...).
TestSpec null_spec(const TestSpec& spec);

/// Seed for grid point `index`, derived from the run seed.
std::uint64_t point_seed(std::uint64_t seed, std::size_t index);

std::string format_ratify(const std::vector<RatifyRow>& rows, bool machine);
std::string format_size(const std::vector<SizeRow>& rows, bool machine);

/// Design parameters of a grid point as "name=value" text.
std::string describe_spec(const TestSpec& spec);

}  // namespace powerlab::mc
