#include "powerlab/power.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "powerlab/dist.hpp"
#include "powerlab/roots.hpp"

namespace powerlab::power {

namespace {

using dist::Kind;

constexpr long kMaxIndex = 1'000'000'000L;
constexpr double kRatioMin = 1e-3;
constexpr double kRatioMax = 1e3;

// Products like 1.1 * 10 land one ulp above an integer; do not round those up.
long ceil_guarded(double x) { return static_cast<long>(std::ceil(x - 1e-9)); }
long floor_guarded(double x) { return static_cast<long>(std::floor(x + 1e-9)); }

double z_upper(double p) { return -dist::normal_quantile(p); }

double critical_tail(const TestSpec& s) {
  return s.tails == Tails::two ? s.alpha.value() / 2 : s.alpha.value();
}

std::vector<FieldError> one_error(std::string field, std::string message) {
  return {FieldError{std::move(field), std::move(message)}};
}

bool finite(double x) { return std::isfinite(x); }

int group_count(const TestSpec& s) {
  if (const auto* a = std::get_if<AnovaDesign>(&s.params)) return a->k;
  return 1;
}

std::size_t arm_count(const TestSpec& s) {
  switch (s.test) {
    case TestId::two_sample_t:
    case TestId::two_proportions_z:
    case TestId::mann_whitney:
    case TestId::log_rank: return 2;
    case TestId::one_way_anova:
    case TestId::kruskal_wallis: return static_cast<std::size_t>(group_count(s));
    default: return 1;
  }
}

long arm_floor(TestId test) {
  switch (test) {
    case TestId::one_sample_t:
    case TestId::paired_t:
    case TestId::two_sample_t:
    case TestId::one_way_anova: return 2;
    case TestId::correlation: return 4;
    default: return 1;
  }
}

bool params_match(TestId test, const DesignInput& p) {
  switch (parametric_parent(test)) {
    case TestId::one_sample_t:
    case TestId::paired_t:
    case TestId::two_sample_t: return std::holds_alternative<MeanDesign>(p);
    case TestId::one_way_anova: return std::holds_alternative<AnovaDesign>(p);
    case TestId::one_proportion_z:
    case TestId::two_proportions_z: return std::holds_alternative<ProportionDesign>(p);
    case TestId::chi_square: return std::holds_alternative<ChiSquareDesign>(p);
    case TestId::correlation: return std::holds_alternative<CorrelationDesign>(p);
    case TestId::log_rank:
    case TestId::cox_ph: return std::holds_alternative<SurvivalDesign>(p);
    default: return false;
  }
}

bool two_arm_ratio(TestId test) {
  return test == TestId::two_sample_t || test == TestId::two_proportions_z || test == TestId::mann_whitney;
}

TestSpec parent_spec(const TestSpec& s) {
  TestSpec p = s;
  p.test = parametric_parent(s.test);
  return p;
}

std::optional<FieldError> allocation_problem(const TestSpec& s, const Allocation& a) {
  if (a.arms.size() != arm_count(s)) {
    return FieldError{"n", fmt::format("expected {} arm sizes, got {}", arm_count(s), a.arms.size())};
  }
  if (is_nonparametric(s.test)) {
    const long floor = arm_floor(parametric_parent(s.test));
    for (long n : a.arms) {
      if (floor_guarded(s.are * static_cast<double>(n)) < floor) {
        return FieldError{"n", fmt::format("each arm needs at least {} subjects after ARE deflation", floor)};
      }
    }
    return std::nullopt;
  }
  const long floor = arm_floor(s.test);
  for (long n : a.arms) {
    if (n < floor) return FieldError{"n", fmt::format("each arm needs at least {} subjects", floor)};
  }
  return std::nullopt;
}

// Power of the t-test with noncentrality ncp.
double t_power(double ncp, double df, const TestSpec& s) {
  const dist::DistParams central{df, 1.0, 0.0};
  const dist::DistParams shifted{df, 1.0, std::fabs(ncp)};
  if (s.tails == Tails::two) {
    const double crit = dist::quantile(Kind::t, 1.0 - s.alpha.value() / 2, central);
    return (1.0 - dist::cdf(Kind::t, crit, shifted)) + dist::cdf(Kind::t, -crit, shifted);
  }
  const double crit = dist::quantile(Kind::t, 1.0 - s.alpha.value(), central);
  return 1.0 - dist::cdf(Kind::t, crit, shifted);
}

double upper_tail_power(Kind kind, dist::DistParams p, double alpha) {
  dist::DistParams central = p;
  central.ncp = 0.0;
  const double crit = dist::quantile(kind, 1.0 - alpha, central);
  return 1.0 - dist::cdf(kind, crit, p);
}

// Two-tailed (or one-tailed) normal power with H0 and H1 standard errors.
double normal_power(double shift, double se0, double se1, const TestSpec& s) {
  const double z = z_upper(critical_tail(s));
  const double m = std::fabs(shift);
  double p = dist::normal_cdf((m - z * se0) / se1);
  if (s.tails == Tails::two) p += dist::normal_cdf((-m - z * se0) / se1);
  return p;
}

double survival_variance(const SurvivalDesign& d) {
  if (d.exposure_prev) return *d.exposure_prev * (1.0 - *d.exposure_prev);
  return *d.sigma * *d.sigma;
}

double logrank_power(const SurvivalDesign& d, double events, const TestSpec& s) {
  const double k = d.ratio_k;
  const double a = std::sqrt(k * events) * std::fabs(d.hr - 1.0) / (k * d.hr + 1.0);
  return dist::normal_cdf(a - z_upper(critical_tail(s)));
}

double cox_power(const SurvivalDesign& d, double n, const TestSpec& s) {
  const double a = std::sqrt(n * d.psi * survival_variance(d) * (1.0 - d.rho2)) * std::fabs(std::log(d.hr));
  return dist::normal_cdf(a - z_upper(critical_tail(s)));
}

bool null_effect(const TestSpec& s) {
  return std::visit(
      [](const auto& d) -> bool {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, MeanDesign>) return d.delta == 0.0;
        if constexpr (std::is_same_v<T, AnovaDesign>) return d.f == 0.0;
        if constexpr (std::is_same_v<T, ProportionDesign>) return d.p0 == d.p1;
        if constexpr (std::is_same_v<T, ChiSquareDesign>) return d.w == 0.0;
        if constexpr (std::is_same_v<T, CorrelationDesign>) return d.r == 0.0;
        if constexpr (std::is_same_v<T, SurvivalDesign>) return d.hr == 1.0;
        return false;
      },
      s.params);
}

void check_reachable(const TestSpec& s, Probability goal) {
  if (goal.value() <= s.alpha.value()) throw InvalidSpec(one_error("power", "must exceed alpha"));
  if (goal.value() >= 1.0) throw Unreachable("power goal of 1 is never attained at finite n");
  if (null_effect(s)) throw Unreachable("effect is null, so power equals alpha at every n");
  if (const auto* d = std::get_if<SurvivalDesign>(&s.params); d && s.test == TestId::cox_ph) {
    if (d->psi == 0.0) throw Unreachable("no events are expected (psi = 0)");
    if (d->rho2 == 1.0) throw Unreachable("covariate is fully explained by other covariates (rho2 = 1)");
  }
}

SolveResult base_result(const TestSpec& s, Target target) {
  SolveResult r;
  r.test = s.test;
  r.target = target;
  r.formula_id = formula_id(s);
  return r;
}

void fill_events(const TestSpec& s, SolveResult& r) {
  if (s.test == TestId::log_rank) {
    const auto& d = std::get<SurvivalDesign>(s.params);
    r.events_required = ceil_guarded(static_cast<double>(r.allocation.arms[0]) * d.pE +
                                     static_cast<double>(r.allocation.arms[1]) * d.pC);
  } else if (s.test == TestId::cox_ph) {
    const auto& d = std::get<SurvivalDesign>(s.params);
    r.events_required = ceil_guarded(static_cast<double>(r.allocation.total()) * d.psi);
  }
}

SolveResult ladder_search(const TestSpec& s, Probability goal) {
  const long lo = minimum_index(s);
  auto reaches = [&](std::int64_t m) {
    return power_of(s, allocation_for(s, static_cast<long>(m))) >= goal.value();
  };
  const auto m = roots::min_integer(reaches, lo, kMaxIndex);
  if (!m) throw Unreachable(fmt::format("power goal needs more than {} subjects per arm", kMaxIndex));
  SolveResult r = base_result(s, Target::sample_size);
  r.index = static_cast<long>(*m);
  r.allocation = allocation_for(s, r.index);
  r.achieved_power = power_of(s, r.allocation);
  return r;
}

struct EffectAxis {
  double sign = 1.0;
  double origin = 0.0;
  double scale = 1.0;
  double limit = std::numeric_limits<double>::infinity();
  bool log_scale = false;

  [[nodiscard]] double value(double s) const {
    return log_scale ? std::exp(sign * s) : origin + sign * s * scale;
  }
};

EffectAxis effect_axis(const TestSpec& spec) {
  EffectAxis ax;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, MeanDesign>) {
          ax.sign = d.delta < 0 ? -1.0 : 1.0;
          ax.scale = d.sd;  // search in standardized units
        } else if constexpr (std::is_same_v<T, ProportionDesign>) {
          ax.origin = d.p0;
          ax.sign = d.p1 < d.p0 ? -1.0 : 1.0;
          ax.limit = d.p1 < d.p0 ? d.p0 : 1.0 - d.p0;
        } else if constexpr (std::is_same_v<T, CorrelationDesign>) {
          ax.sign = d.r < 0 ? -1.0 : 1.0;
          ax.limit = 1.0;
        } else if constexpr (std::is_same_v<T, SurvivalDesign>) {
          ax.sign = d.hr < 1.0 ? -1.0 : 1.0;
          ax.log_scale = true;
        }
      },
      spec.params);
  return ax;
}

}  // namespace

std::vector<FieldError> validate(const TestSpec& spec) {
  std::vector<FieldError> errs;
  auto add = [&](std::string field, std::string msg) { errs.push_back({std::move(field), std::move(msg)}); };

  const double alpha = spec.alpha.value();
  if (!(alpha > 0.0 && alpha < 1.0)) add("alpha", "must lie strictly between 0 and 1");
  if (spec.tails == Tails::one && is_omnibus(spec.test)) {
    add("tails", "omnibus tests are upper-tail only; one-sided alternatives are not defined");
  }
  if (is_nonparametric(spec.test) && !(finite(spec.are) && spec.are > 0.0 && spec.are <= 3.0)) {
    add("are", "must lie in (0, 3]");
  }
  if (!params_match(spec.test, spec.params)) {
    add("params", fmt::format("design inputs do not match test {}", to_string(spec.test)));
    return errs;
  }
  const bool ratio_allowed = two_arm_ratio(spec.test);
  auto check_ratio = [&](double ratio) {
    if (!ratio_allowed) {
      if (ratio != 1.0) add("ratio", "applies to two-sample designs only");
    } else if (!(finite(ratio) && ratio >= kRatioMin && ratio <= kRatioMax)) {
      add("ratio", fmt::format("must lie in [{:g}, {:g}]", kRatioMin, kRatioMax));
    }
  };

  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, MeanDesign>) {
          if (!finite(d.delta)) add("delta", "must be finite");
          if (!(finite(d.sd) && d.sd > 0.0)) add("sd", "must be positive");
          check_ratio(d.ratio);
        } else if constexpr (std::is_same_v<T, AnovaDesign>) {
          if (d.k < 2 || d.k > 1000) add("k", "must be an integer in [2, 1000]");
          if (!(finite(d.f) && d.f >= 0.0)) add("f", "must be nonnegative");
        } else if constexpr (std::is_same_v<T, ProportionDesign>) {
          if (!(d.p0 > 0.0 && d.p0 < 1.0)) add("p0", "must lie strictly between 0 and 1");
          if (!(d.p1 > 0.0 && d.p1 < 1.0)) add("p1", "must lie strictly between 0 and 1");
          check_ratio(d.ratio);
        } else if constexpr (std::is_same_v<T, ChiSquareDesign>) {
          if (!(finite(d.w) && d.w >= 0.0)) add("w", "must be nonnegative");
          if (d.df < 1 || d.df > 10000) add("df", "must be an integer in [1, 10000]");
        } else if constexpr (std::is_same_v<T, CorrelationDesign>) {
          if (!(d.r > -1.0 && d.r < 1.0)) add("r", "must lie strictly between -1 and 1");
        } else if constexpr (std::is_same_v<T, SurvivalDesign>) {
          if (!(finite(d.hr) && d.hr > 0.0)) add("hr", "must be positive");
          if (spec.test == TestId::log_rank) {
            if (!(d.pE > 0.0 && d.pE <= 1.0)) add("pE", "must lie in (0, 1]");
            if (!(d.pC > 0.0 && d.pC <= 1.0)) add("pC", "must lie in (0, 1]");
            if (!(finite(d.ratio_k) && d.ratio_k >= kRatioMin && d.ratio_k <= kRatioMax)) {
              add("ratio_k", fmt::format("must lie in [{:g}, {:g}]", kRatioMin, kRatioMax));
            }
            if (d.exposure_prev) add("exposure_prev", "applies to the Cox model only");
            if (d.sigma) add("sigma", "applies to the Cox model only");
          } else {
            if (d.exposure_prev.has_value() == d.sigma.has_value()) {
              add("exposure_prev", "give exactly one of exposure_prev (binary covariate) or sigma (continuous)");
            }
            if (d.exposure_prev && !(*d.exposure_prev > 0.0 && *d.exposure_prev < 1.0)) {
              add("exposure_prev", "must lie strictly between 0 and 1");
            }
            if (d.sigma && !(finite(*d.sigma) && *d.sigma > 0.0)) add("sigma", "must be positive");
            if (!(d.psi >= 0.0 && d.psi <= 1.0)) add("psi", "must lie in [0, 1]");
            if (!(d.rho2 >= 0.0 && d.rho2 <= 1.0)) add("rho2", "must lie in [0, 1]");
          }
        }
      },
      spec.params);
  return errs;
}

void require_valid(const TestSpec& spec) {
  auto errs = validate(spec);
  if (!errs.empty()) throw InvalidSpec(std::move(errs));
}

Allocation allocation_for(const TestSpec& s, long index) {
  if (is_nonparametric(s.test)) {
    Allocation a = allocation_for(parent_spec(s), index);
    for (long& n : a.arms) {
      const long target = n;
      n = ceil_guarded(static_cast<double>(target) / s.are);
      while (floor_guarded(s.are * static_cast<double>(n)) < target) ++n;
    }
    return a;
  }
  switch (s.test) {
    case TestId::two_sample_t: {
      const double ratio = std::get<MeanDesign>(s.params).ratio;
      return {{index, ceil_guarded(ratio * static_cast<double>(index))}};
    }
    case TestId::two_proportions_z: {
      const double ratio = std::get<ProportionDesign>(s.params).ratio;
      return {{index, ceil_guarded(ratio * static_cast<double>(index))}};
    }
    case TestId::one_way_anova:
      return {std::vector<long>(static_cast<std::size_t>(group_count(s)), index)};
    case TestId::log_rank: {
      const double k = std::get<SurvivalDesign>(s.params).ratio_k;
      return {{ceil_guarded(k * static_cast<double>(index)), index}};
    }
    default: return {{index}};
  }
}

Allocation allocation_from_n(const TestSpec& s, long n) {
  if (!is_nonparametric(s.test)) return allocation_for(s, n);
  switch (s.test) {
    case TestId::mann_whitney:
      return {{n, ceil_guarded(std::get<MeanDesign>(s.params).ratio * static_cast<double>(n))}};
    case TestId::kruskal_wallis:
      return {std::vector<long>(static_cast<std::size_t>(group_count(s)), n)};
    default: return {{n}};
  }
}

long minimum_index(const TestSpec& s) {
  require_valid(s);
  long m = 1;
  while (allocation_problem(s, allocation_for(s, m))) ++m;
  return m;
}

long minimum_n(const TestSpec& s) {
  require_valid(s);
  long n = 1;
  while (allocation_problem(s, allocation_from_n(s, n))) ++n;
  return n;
}

double power_of(const TestSpec& s, const Allocation& alloc) {
  require_valid(s);
  if (auto problem = allocation_problem(s, alloc)) throw InvalidSpec({*problem});

  if (is_nonparametric(s.test)) {
    Allocation parent = alloc;
    for (long& n : parent.arms) n = floor_guarded(s.are * static_cast<double>(n));
    return power_of(parent_spec(s), parent);
  }

  const auto& arms = alloc.arms;
  switch (s.test) {
    case TestId::one_sample_t:
    case TestId::paired_t: {
      const double n = static_cast<double>(arms[0]);
      return t_power(std::get<MeanDesign>(s.params).standardized() * std::sqrt(n), n - 1.0, s);
    }
    case TestId::two_sample_t: {
      const double n1 = static_cast<double>(arms[0]);
      const double n2 = static_cast<double>(arms[1]);
      const double d = std::get<MeanDesign>(s.params).standardized();
      return t_power(d * std::sqrt(n1 * n2 / (n1 + n2)), n1 + n2 - 2.0, s);
    }
    case TestId::one_way_anova: {
      const auto& d = std::get<AnovaDesign>(s.params);
      const double total = static_cast<double>(alloc.total());
      return upper_tail_power(Kind::F, {static_cast<double>(d.k - 1), total - d.k, d.f * d.f * total},
                              s.alpha.value());
    }
    case TestId::one_proportion_z: {
      const auto& d = std::get<ProportionDesign>(s.params);
      const double n = static_cast<double>(arms[0]);
      return normal_power(d.p1 - d.p0, std::sqrt(d.p0 * (1 - d.p0) / n), std::sqrt(d.p1 * (1 - d.p1) / n), s);
    }
    case TestId::two_proportions_z: {
      const auto& d = std::get<ProportionDesign>(s.params);
      const double n1 = static_cast<double>(arms[0]);
      const double n2 = static_cast<double>(arms[1]);
      const double pooled = (n1 * d.p0 + n2 * d.p1) / (n1 + n2);
      const double se0 = std::sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2));
      const double se1 = std::sqrt(d.p0 * (1 - d.p0) / n1 + d.p1 * (1 - d.p1) / n2);
      return normal_power(d.p1 - d.p0, se0, se1, s);
    }
    case TestId::chi_square: {
      const auto& d = std::get<ChiSquareDesign>(s.params);
      const double n = static_cast<double>(arms[0]);
      return upper_tail_power(Kind::chisq, {static_cast<double>(d.df), 1.0, n * d.w * d.w}, s.alpha.value());
    }
    case TestId::correlation: {
      const double n = static_cast<double>(arms[0]);
      return normal_power(std::atanh(std::get<CorrelationDesign>(s.params).r) * std::sqrt(n - 3.0), 1.0, 1.0, s);
    }
    case TestId::log_rank: {
      const auto& d = std::get<SurvivalDesign>(s.params);
      return logrank_power(d, static_cast<double>(arms[0]) * d.pE + static_cast<double>(arms[1]) * d.pC, s);
    }
    case TestId::cox_ph:
      return cox_power(std::get<SurvivalDesign>(s.params), static_cast<double>(arms[0]), s);
    default: break;
  }
  throw InvalidSpec(one_error("test", "unsupported test"));
}

long logrank_events(const SurvivalDesign& d, Probability alpha, Probability goal, Tails tails) {
  return logrank_n(d, alpha, goal, tails).events_required.value_or(0);
}

SolveResult logrank_n(const SurvivalDesign& d, Probability alpha, Probability goal, Tails tails) {
  const TestSpec s{TestId::log_rank, d, alpha, tails};
  require_valid(s);
  check_reachable(s, goal);
  const double z = z_upper(critical_tail(s)) + z_upper(goal.complement());
  const double k = d.ratio_k;
  const double ratio = (k * d.hr + 1.0) / (d.hr - 1.0);
  const double events = ratio * ratio * z * z / k;
  const double per_control = events / (k * d.pE + d.pC);

  SolveResult r = base_result(s, Target::sample_size);
  r.allocation = {{ceil_guarded(per_control * k), ceil_guarded(per_control)}};
  r.index = r.allocation.arms[1];
  r.events_required = ceil_guarded(events);
  r.achieved_power = power_of(s, r.allocation);
  return r;
}

SolveResult cox_ph_n(const SurvivalDesign& d, Probability alpha, Probability goal, Tails tails) {
  const TestSpec s{TestId::cox_ph, d, alpha, tails};
  require_valid(s);
  check_reachable(s, goal);
  const double z = z_upper(critical_tail(s)) + z_upper(goal.complement());
  const double lhr = std::log(d.hr);
  const double info = lhr * lhr * survival_variance(d) * (1.0 - d.rho2);
  const double events = z * z / info;

  SolveResult r = base_result(s, Target::sample_size);
  r.index = std::max(1L, ceil_guarded(z * z / (info * d.psi)));
  r.allocation = {{r.index}};
  r.events_required = ceil_guarded(events);
  r.achieved_power = power_of(s, r.allocation);
  return r;
}

SolveResult nonparametric_n(const TestSpec& spec, Probability goal) {
  require_valid(spec);
  check_reachable(spec, goal);
  return ladder_search(spec, goal);
}

SolveResult solve_n(const TestSpec& spec, Probability goal) {
  require_valid(spec);
  switch (spec.test) {
    case TestId::log_rank:
      return logrank_n(std::get<SurvivalDesign>(spec.params), spec.alpha, goal, spec.tails);
    case TestId::cox_ph:
      return cox_ph_n(std::get<SurvivalDesign>(spec.params), spec.alpha, goal, spec.tails);
    default: break;
  }
  if (is_nonparametric(spec.test)) return nonparametric_n(spec, goal);
  check_reachable(spec, goal);
  return ladder_search(spec, goal);
}

SolveResult solve_power(const TestSpec& spec, long n_fixed) {
  require_valid(spec);
  SolveResult r = base_result(spec, Target::power);
  r.allocation = allocation_from_n(spec, n_fixed);
  r.index = n_fixed;
  r.achieved_power = power_of(spec, r.allocation);
  fill_events(spec, r);
  return r;
}

SolveResult solve_effect(const TestSpec& spec, long n_fixed, Probability goal) {
  require_valid(spec);
  if (goal.value() <= spec.alpha.value()) throw InvalidSpec(one_error("power", "must exceed alpha"));
  if (goal.value() >= 1.0) throw Unreachable("power goal of 1 is never attained at finite n");
  if (const auto* d = std::get_if<SurvivalDesign>(&spec.params); d && spec.test == TestId::cox_ph) {
    if (d->psi == 0.0) throw Unreachable("no events are expected (psi = 0)");
    if (d->rho2 == 1.0) throw Unreachable("covariate is fully explained by other covariates (rho2 = 1)");
  }
  const Allocation alloc = allocation_from_n(spec, n_fixed);
  if (auto problem = allocation_problem(spec, alloc)) throw InvalidSpec({*problem});

  const EffectAxis ax = effect_axis(spec);
  auto power_at = [&](double s) { return power_of(with_effect(spec, ax.value(s)), alloc); };

  double lo = 0.0;
  double hi = 0.0;
  if (std::isfinite(ax.limit)) {
    bool found = false;
    for (int j = 1; j <= 60 && !found; ++j) {
      hi = ax.limit * (1.0 - std::ldexp(1.0, -j));
      if (hi <= lo) continue;
      if (power_at(hi) >= goal.value()) found = true; else lo = hi;
    }
    if (!found) throw Unreachable("no admissible effect reaches the power goal at this sample size");
  } else {
    const double cap = ax.log_scale ? 50.0 : 1e6;
    hi = 1.0;
    while (power_at(hi) < goal.value()) {
      lo = hi;
      hi *= 2.0;
      if (hi > cap) throw Unreachable("power stays below the goal for every effect size at this sample size");
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (power_at(mid) >= goal.value()) hi = mid; else lo = mid;
  }

  SolveResult r = base_result(spec, Target::effect);
  r.effect_field = std::string(effect_field(spec.test));
  r.effect_solved = ax.value(hi);
  r.allocation = alloc;
  r.index = n_fixed;
  r.achieved_power = power_of(with_effect(spec, *r.effect_solved), alloc);
  fill_events(with_effect(spec, *r.effect_solved), r);
  return r;
}

SolveResult solve(const SolveRequest& req) {
  auto need_goal = [&] {
    if (!req.power_goal) throw InvalidSpec(one_error("power", fmt::format("required when target is {}", to_string(req.target))));
    return *req.power_goal;
  };
  auto need_n = [&] {
    if (!req.n_fixed) throw InvalidSpec(one_error("n", fmt::format("required when target is {}", to_string(req.target))));
    return *req.n_fixed;
  };
  switch (req.target) {
    case Target::sample_size: return solve_n(req.spec, need_goal());
    case Target::power: return solve_power(req.spec, need_n());
    case Target::effect: {
      const long n = need_n();
      return solve_effect(req.spec, n, need_goal());
    }
  }
  throw InvalidSpec(one_error("target", "unknown target"));
}

std::optional<Allocation> previous_allocation(const TestSpec& spec, const SolveResult& result) {
  if (spec.test == TestId::log_rank) {
    Allocation prev = result.allocation;
    for (long& n : prev.arms) --n;
    if (prev.arms[0] < 1 || prev.arms[1] < 1) return std::nullopt;
    return prev;
  }
  if (result.index <= minimum_index(spec)) return std::nullopt;
  return allocation_for(spec, result.index - 1);
}

std::string formula_id(const TestSpec& spec) {
  switch (spec.test) {
    case TestId::one_sample_t: return "noncentral_t.one_sample";
    case TestId::paired_t: return "noncentral_t.paired_differences";
    case TestId::two_sample_t: return "noncentral_t.two_sample_pooled";
    case TestId::one_way_anova: return "noncentral_f.cohen_f";
    case TestId::one_proportion_z: return "normal_approx.one_proportion";
    case TestId::two_proportions_z: return "normal_approx.two_proportions_pooled";
    case TestId::chi_square: return "noncentral_chisq.cohen_w";
    case TestId::correlation: return "normal_approx.fisher_z";
    case TestId::log_rank: return "freedman.log_rank";
    case TestId::cox_ph: return "schoenfeld.cox_ph";
    default: break;
  }
  return fmt::format("are_deflation({:g}).{}", spec.are, formula_id(parent_spec(spec)));
}

std::string_view effect_field(TestId test) {
  switch (parametric_parent(test)) {
    case TestId::one_way_anova: return "f";
    case TestId::one_proportion_z:
    case TestId::two_proportions_z: return "p1";
    case TestId::chi_square: return "w";
    case TestId::correlation: return "r";
    case TestId::log_rank:
    case TestId::cox_ph: return "hr";
    default: return "delta";
  }
}

double effect_value(const TestSpec& spec) {
  return std::visit(
      [](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, MeanDesign>) return d.delta;
        if constexpr (std::is_same_v<T, AnovaDesign>) return d.f;
        if constexpr (std::is_same_v<T, ProportionDesign>) return d.p1;
        if constexpr (std::is_same_v<T, ChiSquareDesign>) return d.w;
        if constexpr (std::is_same_v<T, CorrelationDesign>) return d.r;
        if constexpr (std::is_same_v<T, SurvivalDesign>) return d.hr;
        return 0.0;
      },
      spec.params);
}

TestSpec with_effect(const TestSpec& spec, double value) {
  TestSpec out = spec;
  std::visit(
      [&](auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, MeanDesign>) d.delta = value;
        if constexpr (std::is_same_v<T, AnovaDesign>) d.f = value;
        if constexpr (std::is_same_v<T, ProportionDesign>) d.p1 = value;
        if constexpr (std::is_same_v<T, ChiSquareDesign>) d.w = value;
        if constexpr (std::is_same_v<T, CorrelationDesign>) d.r = value;
        if constexpr (std::is_same_v<T, SurvivalDesign>) d.hr = value;
      },
      out.params);
  return out;
}

std::vector<std::string> arm_labels(const TestSpec& spec) {
  switch (spec.test) {
    case TestId::log_rank: return {"experimental", "control"};
    case TestId::two_sample_t:
    case TestId::two_proportions_z:
    case TestId::mann_whitney: return {"group1", "group2"};
    default: break;
  }
  const std::size_t k = arm_count(spec);
  if (k == 1) return {"all"};
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= k; ++i) out.push_back(fmt::format("group{}", i));
  return out;
}

}  // namespace powerlab::power
