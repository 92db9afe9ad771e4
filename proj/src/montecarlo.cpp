#include "powerlab/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "powerlab/dist.hpp"
#include "powerlab/power.hpp"

namespace powerlab::mc {

namespace {

using Engine = std::mt19937_64;
using dist::Kind;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Engine batch_engine(std::uint64_t seed, long batch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(batch), static_cast<std::uint32_t>(static_cast<std::uint64_t>(batch) >> 32)};
  return Engine(seq);
}

enum class ErrorDist { normal, parabolic, uniform, laplace };

ErrorDist error_for(double are) {
  auto near = [&](double x) { return std::fabs(are - x) < 1e-3; };
  if (near(108.0 / 125.0)) return ErrorDist::parabolic;
  if (near(3.0 / std::numbers::pi)) return ErrorDist::normal;
  if (near(1.0)) return ErrorDist::uniform;
  if (near(1.5)) return ErrorDist::laplace;
  throw Unsupported(fmt::format("no error distribution with ARE {} (supported: 0.864, 3/pi, 1, 1.5)", are));
}

// Unit-variance draws.
struct Noise {
  ErrorDist kind = ErrorDist::normal;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> unit{-1.0, 1.0};
  std::exponential_distribution<double> expo{1.0};

  double operator()(Engine& g) {
    switch (kind) {
      case ErrorDist::normal: return normal(g);
      case ErrorDist::parabolic: {
        // Epanechnikov kernel on [-1, 1] (variance 1/5), scaled by sqrt(5).
        const double u1 = unit(g), u2 = unit(g), u3 = unit(g);
        const double x = (std::fabs(u3) >= std::fabs(u2) && std::fabs(u3) >= std::fabs(u1)) ? u2 : u3;
        return x * std::sqrt(5.0);
      }
      case ErrorDist::uniform: return unit(g) * std::sqrt(3.0);
      case ErrorDist::laplace: {
        const double e = expo(g) / std::sqrt(2.0);
        return unit(g) < 0 ? -e : e;
      }
    }
    return 0.0;
  }
};

// Centered, unit population SD group pattern for k groups.
std::vector<double> pattern(int k) {
  std::vector<double> c(static_cast<std::size_t>(k));
  const double mid = (k - 1) / 2.0;
  double ss = 0.0;
  for (int i = 0; i < k; ++i) {
    c[static_cast<std::size_t>(i)] = i - mid;
    ss += (i - mid) * (i - mid);
  }
  const double scale = std::sqrt(ss / k);
  for (auto& x : c) x /= scale;
  return c;
}

double t_crit(double p, double df) { return dist::quantile(Kind::t, p, {df, 1.0, 0.0}); }
double chisq_crit(double p, double df) { return dist::quantile(Kind::chisq, p, {df, 1.0, 0.0}); }
double f_crit(double p, double df1, double df2) { return dist::quantile(Kind::F, p, {df1, df2, 0.0}); }

// Rejection rule for a statistic that is positive in the effect's direction.
struct Rule {
  double crit = 0.0;
  bool two = true;
  bool reject(double stat) const { return two ? std::fabs(stat) > crit : stat > crit; }
};

Rule t_rule(const TestSpec& s, double df) {
  const double a = s.alpha.value();
  return s.tails == Tails::two ? Rule{t_crit(1.0 - a / 2, df), true} : Rule{t_crit(1.0 - a, df), false};
}

Rule z_rule(const TestSpec& s) {
  const double a = s.alpha.value();
  return s.tails == Tails::two ? Rule{dist::normal_quantile(1.0 - a / 2), true}
                               : Rule{dist::normal_quantile(1.0 - a), false};
}

double sign_of(double x) { return x < 0 ? -1.0 : 1.0; }

struct Work {
  std::vector<double> x;
  std::vector<std::pair<double, int>> tagged;
  std::vector<double> rank_sums;
  struct Subject {
    double time;
    bool event;
    int group;
    double x;
    double z;
  };
  std::vector<Subject> subjects;
};

class Kernel {
 public:
  virtual ~Kernel() = default;
  virtual bool reject(Engine& g, Noise& noise, Work& w) const = 0;
  ErrorDist noise_kind = ErrorDist::normal;
};

class OneSampleT final : public Kernel {
 public:
  OneSampleT(long n, double d, Rule rule) : n_(n), d_(d), rule_(rule) {}
  bool reject(Engine& g, Noise& noise, Work&) const override {
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < n_; ++i) {
      const double x = d_ + noise(g);
      sum += x;
      sumsq += x * x;
    }
    const double n = static_cast<double>(n_);
    const double mean = sum / n;
    const double var = (sumsq - n * mean * mean) / (n - 1.0);
    return rule_.reject(sign_of(d_) * mean / std::sqrt(var / n));
  }

 private:
  long n_;
  double d_;
  Rule rule_;
};

class TwoSampleT final : public Kernel {
 public:
  TwoSampleT(long n1, long n2, double d, Rule rule) : n1_(n1), n2_(n2), d_(d), rule_(rule) {}
  bool reject(Engine& g, Noise& noise, Work&) const override {
    auto moments = [&](long n, double shift, double& mean, double& ss) {
      double sum = 0.0, sumsq = 0.0;
      for (long i = 0; i < n; ++i) {
        const double x = shift + noise(g);
        sum += x;
        sumsq += x * x;
      }
      mean = sum / static_cast<double>(n);
      ss = sumsq - static_cast<double>(n) * mean * mean;
    };
    double m1, ss1, m2, ss2;
    moments(n1_, 0.0, m1, ss1);
    moments(n2_, d_, m2, ss2);
    const double a = static_cast<double>(n1_), b = static_cast<double>(n2_);
    const double pooled = (ss1 + ss2) / (a + b - 2.0);
    return rule_.reject(sign_of(d_) * (m2 - m1) / std::sqrt(pooled * (1.0 / a + 1.0 / b)));
  }

 private:
  long n1_, n2_;
  double d_;
  Rule rule_;
};

class OneWayF final : public Kernel {
 public:
  OneWayF(std::vector<long> arms, std::vector<double> shifts, double crit)
      : arms_(std::move(arms)), shifts_(std::move(shifts)), crit_(crit) {}
  bool reject(Engine& g, Noise& noise, Work&) const override {
    double grand = 0.0, ssw = 0.0, ssb_part = 0.0;
    long total = 0;
    for (std::size_t j = 0; j < arms_.size(); ++j) {
      double sum = 0.0, sumsq = 0.0;
      for (long i = 0; i < arms_[j]; ++i) {
        const double x = shifts_[j] + noise(g);
        sum += x;
        sumsq += x * x;
      }
      const double n = static_cast<double>(arms_[j]);
      ssw += sumsq - sum * sum / n;
      ssb_part += sum * sum / n;
      grand += sum;
      total += arms_[j];
    }
    const double k = static_cast<double>(arms_.size());
    const double ssb = ssb_part - grand * grand / static_cast<double>(total);
    const double f = (ssb / (k - 1.0)) / (ssw / (static_cast<double>(total) - k));
    return f > crit_;
  }

 private:
  std::vector<long> arms_;
  std::vector<double> shifts_;
  double crit_;
};

class OneProportion final : public Kernel {
 public:
  OneProportion(long n, double p0, double p1, Rule rule) : n_(n), p0_(p0), p1_(p1), rule_(rule) {}
  bool reject(Engine& g, Noise&, Work&) const override {
    std::binomial_distribution<long> draw(n_, p1_);
    const double n = static_cast<double>(n_);
    const double phat = static_cast<double>(draw(g)) / n;
    const double z = (phat - p0_) / std::sqrt(p0_ * (1.0 - p0_) / n);
    return rule_.reject(sign_of(p1_ - p0_) * z);
  }

 private:
  long n_;
  double p0_, p1_;
  Rule rule_;
};

class TwoProportions final : public Kernel {
 public:
  TwoProportions(long n1, long n2, double p0, double p1, Rule rule)
      : n1_(n1), n2_(n2), p0_(p0), p1_(p1), rule_(rule) {}
  bool reject(Engine& g, Noise&, Work&) const override {
    std::binomial_distribution<long> d1(n1_, p0_), d2(n2_, p1_);
    const long x1 = d1(g), x2 = d2(g);
    const double a = static_cast<double>(n1_), b = static_cast<double>(n2_);
    const double pooled = static_cast<double>(x1 + x2) / (a + b);
    const double var = pooled * (1.0 - pooled) * (1.0 / a + 1.0 / b);
    if (var <= 0.0) return false;
    const double z = (static_cast<double>(x2) / b - static_cast<double>(x1) / a) / std::sqrt(var);
    return rule_.reject(sign_of(p1_ - p0_) * z);
  }

 private:
  long n1_, n2_;
  double p0_, p1_;
  Rule rule_;
};

// Pearson goodness of fit against equal cell probabilities.
class GoodnessOfFit final : public Kernel {
 public:
  GoodnessOfFit(long n, std::vector<double> probs, double crit) : n_(n), probs_(std::move(probs)), crit_(crit) {}
  bool reject(Engine& g, Noise&, Work&) const override {
    const double expected = static_cast<double>(n_) / static_cast<double>(probs_.size());
    long left = n_;
    double mass = 1.0, stat = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      long count = left;
      if (i + 1 < probs_.size()) {
        std::binomial_distribution<long> draw(left, std::clamp(probs_[i] / mass, 0.0, 1.0));
        count = draw(g);
      }
      left -= count;
      mass -= probs_[i];
      const double diff = static_cast<double>(count) - expected;
      stat += diff * diff / expected;
    }
    return stat > crit_;
  }

 private:
  long n_;
  std::vector<double> probs_;
  double crit_;
};

class PearsonT final : public Kernel {
 public:
  PearsonT(long n, double r, Rule rule) : n_(n), r_(r), rule_(rule) {}
  bool reject(Engine& g, Noise& noise, Work&) const override {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const double c = std::sqrt(1.0 - r_ * r_);
    for (long i = 0; i < n_; ++i) {
      const double x = noise(g);
      const double y = r_ * x + c * noise(g);
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
    }
    const double n = static_cast<double>(n_);
    const double cxy = sxy - sx * sy / n, cxx = sxx - sx * sx / n, cyy = syy - sy * sy / n;
    const double rhat = cxy / std::sqrt(cxx * cyy);
    const double t = rhat * std::sqrt((n - 2.0) / (1.0 - rhat * rhat));
    return rule_.reject(sign_of(r_) * t);
  }

 private:
  long n_;
  double r_;
  Rule rule_;
};

// Rank sums per group of pooled samples (continuous data, so no ties).
void rank_sums(Work& w, std::size_t groups) {
  std::sort(w.tagged.begin(), w.tagged.end());
  w.rank_sums.assign(groups, 0.0);
  for (std::size_t i = 0; i < w.tagged.size(); ++i) {
    w.rank_sums[static_cast<std::size_t>(w.tagged[i].second)] += static_cast<double>(i + 1);
  }
}

class RankSum final : public Kernel {
 public:
  RankSum(long n1, long n2, double shift, Rule rule) : n1_(n1), n2_(n2), shift_(shift), rule_(rule) {}
  bool reject(Engine& g, Noise& noise, Work& w) const override {
    w.tagged.clear();
    for (long i = 0; i < n1_; ++i) w.tagged.emplace_back(noise(g), 0);
    for (long i = 0; i < n2_; ++i) w.tagged.emplace_back(shift_ + noise(g), 1);
    rank_sums(w, 2);
    const double a = static_cast<double>(n1_), b = static_cast<double>(n2_), n = a + b;
    const double z = (w.rank_sums[1] - b * (n + 1.0) / 2.0) / std::sqrt(a * b * (n + 1.0) / 12.0);
    return rule_.reject(sign_of(shift_) * z);
  }

 private:
  long n1_, n2_;
  double shift_;
  Rule rule_;
};

class SignedRank final : public Kernel {
 public:
  SignedRank(long n, double shift, Rule rule) : n_(n), shift_(shift), rule_(rule) {}
  bool reject(Engine& g, Noise& noise, Work& w) const override {
    w.tagged.clear();
    for (long i = 0; i < n_; ++i) {
      const double d = shift_ + noise(g);
      w.tagged.emplace_back(std::fabs(d), d > 0 ? 1 : 0);
    }
    rank_sums(w, 2);
    const double n = static_cast<double>(n_);
    const double z = (w.rank_sums[1] - n * (n + 1.0) / 4.0) / std::sqrt(n * (n + 1.0) * (2.0 * n + 1.0) / 24.0);
    return rule_.reject(sign_of(shift_) * z);
  }

 private:
  long n_;
  double shift_;
  Rule rule_;
};

class KruskalWallis final : public Kernel {
 public:
  KruskalWallis(std::vector<long> arms, std::vector<double> shifts, double crit)
      : arms_(std::move(arms)), shifts_(std::move(shifts)), crit_(crit) {}
  bool reject(Engine& g, Noise& noise, Work& w) const override {
    w.tagged.clear();
    long total = 0;
    for (std::size_t j = 0; j < arms_.size(); ++j) {
      for (long i = 0; i < arms_[j]; ++i) w.tagged.emplace_back(shifts_[j] + noise(g), static_cast<int>(j));
      total += arms_[j];
    }
    rank_sums(w, arms_.size());
    const double n = static_cast<double>(total);
    double h = 0.0;
    for (std::size_t j = 0; j < arms_.size(); ++j) h += w.rank_sums[j] * w.rank_sums[j] / static_cast<double>(arms_[j]);
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    return h > crit_;
  }

 private:
  std::vector<long> arms_;
  std::vector<double> shifts_;
  double crit_;
};

void draw_survival(Engine& g, Work& w, long n, int group, double hazard, const SurvivalModel& m) {
  std::exponential_distribution<double> life(hazard);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (long i = 0; i < n; ++i) {
    const double t = life(g);
    const double c = m.censored ? m.follow_up + m.accrual * u(g) : std::numeric_limits<double>::infinity();
    w.subjects.push_back({std::min(t, c), t <= c, group, 0.0, 0.0});
  }
}

class LogRank final : public Kernel {
 public:
  LogRank(long ne, long nc, SurvivalModel model, Rule rule) : ne_(ne), nc_(nc), model_(model), rule_(rule) {}
  bool reject(Engine& g, Noise&, Work& w) const override {
    w.subjects.clear();
    draw_survival(g, w, ne_, 0, model_.hazard_experimental, model_);
    draw_survival(g, w, nc_, 1, model_.hazard_control, model_);
    std::sort(w.subjects.begin(), w.subjects.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    double at_e = static_cast<double>(ne_), at_c = static_cast<double>(nc_);
    double o_minus_e = 0.0, var = 0.0;
    for (const auto& s : w.subjects) {
      if (s.event) {
        const double r = at_e + at_c;
        o_minus_e += (s.group == 0 ? 1.0 : 0.0) - at_e / r;
        var += at_e * at_c / (r * r);
      }
      (s.group == 0 ? at_e : at_c) -= 1.0;
    }
    if (var <= 0.0) return false;
    const double dir = model_.hazard_experimental >= model_.hazard_control ? 1.0 : -1.0;
    return rule_.reject(dir * o_minus_e / std::sqrt(var));
  }

 private:
  long ne_, nc_;
  SurvivalModel model_;
  Rule rule_;
};

// Cox partial-likelihood score test for the exposure coefficient, with an
// optional nuisance covariate fitted under the null.
class CoxScore final : public Kernel {
 public:
  struct Setup {
    long n = 0;
    double beta = 0.0;
    std::optional<double> prevalence;
    double sigma = 1.0;
    double rho2 = 0.0;
    double horizon = std::numeric_limits<double>::infinity();
  };
  CoxScore(Setup s, Rule rule) : s_(s), rule_(rule) {}

  bool reject(Engine& g, Noise& noise, Work& w) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::exponential_distribution<double> unit_life(1.0);
    w.subjects.clear();
    const bool nuisance = s_.rho2 > 0.0;
    const double x_sd = s_.prevalence ? std::sqrt(*s_.prevalence * (1.0 - *s_.prevalence)) : s_.sigma;
    const double x_mean = s_.prevalence ? *s_.prevalence : 0.0;
    const double extra_sd = nuisance ? std::sqrt(1.0 / s_.rho2 - 1.0) : 0.0;
    for (long i = 0; i < s_.n; ++i) {
      const double x = s_.prevalence ? (u(g) < *s_.prevalence ? 1.0 : 0.0) : s_.sigma * noise(g);
      const double z = nuisance ? (x - x_mean) / x_sd + extra_sd * noise(g) : 0.0;
      const double t = unit_life(g) / std::exp(s_.beta * x);
      w.subjects.push_back({std::min(t, s_.horizon), t <= s_.horizon, 0, x, z});
    }
    std::sort(w.subjects.begin(), w.subjects.end(), [](const auto& a, const auto& b) { return a.time < b.time; });

    double gamma = 0.0;
    if (nuisance) {
      for (int it = 0; it < 30; ++it) {
        double u_g = 0.0, i_g = 0.0;
        sweep(w, gamma, [&](const auto& sub, const Sums& s) {
          const double mz = s.z / s.w;
          u_g += sub.z - mz;
          i_g += s.zz / s.w - mz * mz;
        });
        if (i_g <= 0.0) break;
        const double step = u_g / i_g;
        gamma += step;
        if (!std::isfinite(gamma)) return false;
        if (std::fabs(step) < 1e-10) break;
      }
    }
    double score = 0.0, ixx = 0.0, ixz = 0.0, izz = 0.0;
    sweep(w, gamma, [&](const auto& sub, const Sums& s) {
      const double mx = s.x / s.w, mz = s.z / s.w;
      score += sub.x - mx;
      ixx += s.xx / s.w - mx * mx;
      ixz += s.xz / s.w - mx * mz;
      izz += s.zz / s.w - mz * mz;
    });
    const double info = nuisance && izz > 0.0 ? ixx - ixz * ixz / izz : ixx;
    if (info <= 0.0) return false;
    return rule_.reject(sign_of(s_.beta) * score / std::sqrt(info));
  }

 private:
  struct Sums {
    double w = 0, x = 0, z = 0, xx = 0, xz = 0, zz = 0;
  };

  // Visits events from the latest time back, with risk-set sums weighted by
  // exp(gamma * z).
  template <class F>
  static void sweep(const Work& w, double gamma, F&& on_event) {
    Sums s;
    for (auto it = w.subjects.rbegin(); it != w.subjects.rend(); ++it) {
      const double e = std::exp(gamma * it->z);
      s.w += e;
      s.x += e * it->x;
      s.z += e * it->z;
      s.xx += e * it->x * it->x;
      s.xz += e * it->x * it->z;
      s.zz += e * it->z * it->z;
      if (it->event) on_event(*it, s);
    }
  }

  Setup s_;
  Rule rule_;
};

// Increasing root of f on [lo, hi] by bisection.
double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(hi)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double cox_event_probability(const CoxScore::Setup& s, double horizon) {
  auto p = [&](double x) { return -std::expm1(-std::exp(s.beta * x) * horizon); };
  if (s.prevalence) return (1.0 - *s.prevalence) * p(0.0) + *s.prevalence * p(1.0);
  // Normal exposure: Simpson's rule over +-10 SD.
  const int m = 2000;
  const double lo = -10.0, h = 20.0 / m;
  double acc = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double z = lo + i * h;
    const double wgt = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += wgt * p(s.sigma * z) * std::exp(-0.5 * z * z);
  }
  return acc * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

CoxScore::Setup cox_setup(const TestSpec& spec, long n) {
  const auto& d = std::get<SurvivalDesign>(spec.params);
  CoxScore::Setup s;
  s.n = n;
  s.beta = std::log(d.hr);
  s.prevalence = d.exposure_prev;
  s.sigma = d.sigma.value_or(1.0);
  s.rho2 = d.rho2;
  if (d.psi < 1.0) {
    double hi = 1.0;
    while (cox_event_probability(s, hi) < d.psi) hi *= 2.0;
    s.horizon = bisect([&](double t) { return cox_event_probability(s, t) - d.psi; }, 0.0, hi);
  }
  return s;
}

std::unique_ptr<Kernel> make_kernel(const SimPlan& plan) {
  const TestSpec& s = plan.spec;
  power::require_valid(s);
  const auto& arms = plan.n.arms;
  auto need_arms = [&](std::size_t k) {
    if (arms.size() != k) throw Unsupported(fmt::format("{} needs {} arm sizes", to_string(s.test), k));
  };
  std::unique_ptr<Kernel> k;
  ErrorDist noise = ErrorDist::normal;
  switch (s.test) {
    case TestId::one_sample_t:
    case TestId::paired_t: {
      need_arms(1);
      k = std::make_unique<OneSampleT>(arms[0], std::get<MeanDesign>(s.params).standardized(),
                                       t_rule(s, static_cast<double>(arms[0] - 1)));
      break;
    }
    case TestId::two_sample_t: {
      need_arms(2);
      k = std::make_unique<TwoSampleT>(arms[0], arms[1], std::get<MeanDesign>(s.params).standardized(),
                                       t_rule(s, static_cast<double>(arms[0] + arms[1] - 2)));
      break;
    }
    case TestId::one_way_anova:
    case TestId::kruskal_wallis: {
      const auto& d = std::get<AnovaDesign>(s.params);
      need_arms(static_cast<std::size_t>(d.k));
      std::vector<double> shifts = pattern(d.k);
      for (auto& x : shifts) x *= d.f;
      long total = 0;
      for (long a : arms) total += a;
      if (s.test == TestId::one_way_anova) {
        k = std::make_unique<OneWayF>(arms, shifts, f_crit(1.0 - s.alpha.value(), d.k - 1.0, static_cast<double>(total - d.k)));
      } else {
        noise = error_for(s.are);
        k = std::make_unique<KruskalWallis>(arms, shifts, chisq_crit(1.0 - s.alpha.value(), d.k - 1.0));
      }
      break;
    }
    case TestId::one_proportion_z: {
      need_arms(1);
      const auto& d = std::get<ProportionDesign>(s.params);
      k = std::make_unique<OneProportion>(arms[0], d.p0, d.p1, z_rule(s));
      break;
    }
    case TestId::two_proportions_z: {
      need_arms(2);
      const auto& d = std::get<ProportionDesign>(s.params);
      k = std::make_unique<TwoProportions>(arms[0], arms[1], d.p0, d.p1, z_rule(s));
      break;
    }
    case TestId::chi_square: {
      need_arms(1);
      const auto& d = std::get<ChiSquareDesign>(s.params);
      const int cells = d.df + 1;
      std::vector<double> probs = pattern(cells);
      for (auto& c : probs) {
        c = (1.0 + d.w * c) / cells;
        if (c < 0.0) throw Unsupported(fmt::format("w = {} is too large for {} equiprobable cells", d.w, cells));
      }
      k = std::make_unique<GoodnessOfFit>(arms[0], probs, chisq_crit(1.0 - s.alpha.value(), d.df));
      break;
    }
    case TestId::correlation: {
      need_arms(1);
      k = std::make_unique<PearsonT>(arms[0], std::get<CorrelationDesign>(s.params).r,
                                     t_rule(s, static_cast<double>(arms[0] - 2)));
      break;
    }
    case TestId::mann_whitney: {
      need_arms(2);
      noise = error_for(s.are);
      k = std::make_unique<RankSum>(arms[0], arms[1], std::get<MeanDesign>(s.params).standardized(), z_rule(s));
      break;
    }
    case TestId::paired_wilcoxon: {
      need_arms(1);
      noise = error_for(s.are);
      k = std::make_unique<SignedRank>(arms[0], std::get<MeanDesign>(s.params).standardized(), z_rule(s));
      break;
    }
    case TestId::log_rank: {
      need_arms(2);
      k = std::make_unique<LogRank>(arms[0], arms[1], logrank_model(std::get<SurvivalDesign>(s.params)), z_rule(s));
      break;
    }
    case TestId::cox_ph: {
      need_arms(1);
      k = std::make_unique<CoxScore>(cox_setup(s, arms[0]), z_rule(s));
      break;
    }
  }
  k->noise_kind = noise;
  return k;
}

// Runs per-batch work across threads; results are combined by batch index.
template <class F>
std::vector<long> run_batches(long replications, int threads, F&& batch_fn) {
  const long batches = (replications + kBatchSize - 1) / kBatchSize;
  std::vector<long> out(static_cast<std::size_t>(batches), 0);
  int t = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  t = static_cast<int>(std::min<long>(t, batches));
  std::atomic<long> next{0};
  auto worker = [&] {
    for (long b = next++; b < batches; b = next++) {
      const long count = std::min(kBatchSize, replications - b * kBatchSize);
      out[static_cast<std::size_t>(b)] = batch_fn(b, count);
    }
  };
  if (t <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < t; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

std::string fmt_num(double v) { return fmt::format("{:g}", v); }

}  // namespace

double standard_error(double p, long replications) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(replications));
}

std::string error_distribution(double are) {
  switch (error_for(are)) {
    case ErrorDist::normal: return "normal";
    case ErrorDist::parabolic: return "parabolic";
    case ErrorDist::uniform: return "uniform";
    case ErrorDist::laplace: return "laplace";
  }
  return "?";
}

PowerEstimate simulate_power(const SimPlan& plan) {
  if (plan.replications < 1) throw std::invalid_argument("replications must be positive");
  const auto kernel = make_kernel(plan);
  const auto counts = run_batches(plan.replications, plan.threads, [&](long b, long count) {
    Engine g = batch_engine(plan.seed, b);
    Noise noise;
    noise.kind = kernel->noise_kind;
    Work w;
    long hits = 0;
    for (long i = 0; i < count; ++i) hits += kernel->reject(g, noise, w) ? 1 : 0;
    return hits;
  });
  PowerEstimate e;
  for (long c : counts) e.rejections += c;
  e.replications = plan.replications;
  e.seed = plan.seed;
  e.p_hat = static_cast<double>(e.rejections) / static_cast<double>(plan.replications);
  e.mc_standard_error = standard_error(e.p_hat, plan.replications);
  return e;
}

double event_probability(double rate, double accrual, double follow_up) {
  const double tail = std::exp(-rate * follow_up);
  if (accrual <= 0.0) return 1.0 - tail;
  const double x = rate * accrual;
  return 1.0 - tail * (-std::expm1(-x) / x);
}

SurvivalModel logrank_model(const SurvivalDesign& d) {
  SurvivalModel m;
  const double lo_p = std::min(d.pE, d.pC), hi_p = std::max(d.pE, d.pC);
  const double ratio = d.hr >= 1.0 ? d.hr : 1.0 / d.hr;
  const bool experimental_high = d.pE != d.pC ? d.pE > d.pC : d.hr > 1.0;
  m.hazard_experimental = experimental_high ? ratio : 1.0;
  m.hazard_control = experimental_high ? 1.0 : ratio;
  const double low_hazard = 1.0, high_hazard = ratio;

  if (lo_p >= 1.0) {
    m.censored = false;
  } else {
    // For an accrual share s of the horizon, the horizon is set by the
    // low-hazard arm; the share is then chosen to match the other arm.
    auto horizon_for = [&](double s) {
      double hi = 1.0;
      while (event_probability(low_hazard, s * hi, (1.0 - s) * hi) < lo_p) hi *= 2.0;
      return bisect([&](double h) { return event_probability(low_hazard, s * h, (1.0 - s) * h) - lo_p; }, 0.0, hi);
    };
    auto high_prob = [&](double s) {
      const double h = horizon_for(s);
      return event_probability(high_hazard, s * h, (1.0 - s) * h);
    };
    const double at_fixed = high_prob(0.0), at_uniform = high_prob(1.0);
    double share;
    if ((hi_p - at_fixed) * (hi_p - at_uniform) <= 0.0 && at_fixed != at_uniform) {
      // high_prob decreases in the share.
      share = bisect([&](double s) { return hi_p - high_prob(s); }, 0.0, 1.0);
    } else {
      share = std::fabs(hi_p - at_fixed) <= std::fabs(hi_p - at_uniform) ? 0.0 : 1.0;
    }
    const double h = horizon_for(share);
    m.accrual = share * h;
    m.follow_up = (1.0 - share) * h;
  }
  auto prob = [&](double rate) { return m.censored ? event_probability(rate, m.accrual, m.follow_up) : 1.0; };
  m.event_prob_experimental = prob(m.hazard_experimental);
  m.event_prob_control = prob(m.hazard_control);
  m.exact = std::fabs(m.event_prob_experimental - d.pE) < 1e-9 && std::fabs(m.event_prob_control - d.pC) < 1e-9;
  return m;
}

EventFractions simulate_event_fractions(const SimPlan& plan) {
  const TestSpec& s = plan.spec;
  power::require_valid(s);
  const std::size_t arms = s.test == TestId::log_rank ? 2 : 1;
  if (s.test != TestId::log_rank && s.test != TestId::cox_ph) throw Unsupported("event fractions need a survival test");
  if (plan.n.arms.size() != arms) throw Unsupported("wrong number of arm sizes");
  std::vector<std::vector<long>> per_batch;
  std::vector<long> events(arms, 0);
  const long batches = (plan.replications + kBatchSize - 1) / kBatchSize;
  per_batch.resize(static_cast<std::size_t>(batches));
  std::optional<SurvivalModel> model;
  std::optional<CoxScore::Setup> cox;
  if (s.test == TestId::log_rank) {
    model = logrank_model(std::get<SurvivalDesign>(s.params));
  } else {
    cox = cox_setup(s, plan.n.arms[0]);
  }
  run_batches(plan.replications, plan.threads, [&](long b, long count) {
    Engine g = batch_engine(plan.seed, b);
    Work w;
    std::vector<long> ev(arms, 0);
    for (long i = 0; i < count; ++i) {
      w.subjects.clear();
      if (model) {
        draw_survival(g, w, plan.n.arms[0], 0, model->hazard_experimental, *model);
        draw_survival(g, w, plan.n.arms[1], 1, model->hazard_control, *model);
      } else {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> z(0.0, 1.0);
        std::exponential_distribution<double> life(1.0);
        for (long j = 0; j < cox->n; ++j) {
          const double x = cox->prevalence ? (u(g) < *cox->prevalence ? 1.0 : 0.0) : cox->sigma * z(g);
          const double t = life(g) / std::exp(cox->beta * x);
          w.subjects.push_back({t, t <= cox->horizon, 0, x, 0.0});
        }
      }
      for (const auto& sub : w.subjects) ev[static_cast<std::size_t>(sub.group)] += sub.event ? 1 : 0;
    }
    per_batch[static_cast<std::size_t>(b)] = ev;
    return 0L;
  });
  for (const auto& ev : per_batch) {
    for (std::size_t a = 0; a < arms; ++a) events[a] += ev[a];
  }
  EventFractions out;
  for (std::size_t a = 0; a < arms; ++a) {
    const long subjects = plan.n.arms[a] * plan.replications;
    out.subjects.push_back(subjects);
    out.events.push_back(events[a]);
    out.fractions.push_back(static_cast<double>(events[a]) / static_cast<double>(subjects));
  }
  return out;
}

bool is_approximate(TestId test) {
  switch (test) {
    case TestId::one_sample_t:
    case TestId::two_sample_t:
    case TestId::paired_t:
    case TestId::one_way_anova: return false;
    default: return true;
  }
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::flag: return "flag";
    case Verdict::fail: return "fail";
  }
  return "?";
}

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> g;
  auto add = [&](TestId test, DesignInput params, double goal, double alpha = 0.05, Tails tails = Tails::two,
                 double are = kDefaultAre) {
    TestSpec s{test, std::move(params), Probability{alpha}, tails, are};
    g.push_back({"", s, Probability{goal}});
  };
  const double normal_are = 3.0 / std::numbers::pi;
  using T = TestId;
  add(T::one_sample_t, MeanDesign{1.5, 0.5}, 0.8);
  add(T::one_sample_t, MeanDesign{0.5, 1.0}, 0.8);
  add(T::one_sample_t, MeanDesign{0.3, 1.0}, 0.9);
  add(T::one_sample_t, MeanDesign{0.8, 1.0}, 0.8, 0.05, Tails::one);
  add(T::one_sample_t, MeanDesign{1.0, 2.0}, 0.9, 0.01);

  add(T::two_sample_t, MeanDesign{1.5, 0.5}, 0.8);
  add(T::two_sample_t, MeanDesign{0.5, 1.0}, 0.8);
  add(T::two_sample_t, MeanDesign{0.4, 1.0, 2.0}, 0.8);
  add(T::two_sample_t, MeanDesign{1.0, 1.0}, 0.8, 0.05, Tails::one);
  add(T::two_sample_t, MeanDesign{0.8, 1.0}, 0.9, 0.01);

  add(T::paired_t, MeanDesign{0.4, 1.0}, 0.9);
  add(T::paired_t, MeanDesign{1.0, 1.0}, 0.8);
  add(T::paired_t, MeanDesign{0.5, 1.0}, 0.8, 0.05, Tails::one);
  add(T::paired_t, MeanDesign{0.3, 0.5}, 0.8);
  add(T::paired_t, MeanDesign{1.2, 1.0}, 0.9, 0.01);

  add(T::one_way_anova, AnovaDesign{3, 0.25}, 0.8);
  add(T::one_way_anova, AnovaDesign{4, 0.4}, 0.8);
  add(T::one_way_anova, AnovaDesign{2, 0.5}, 0.9);
  add(T::one_way_anova, AnovaDesign{5, 0.3}, 0.8, 0.01);
  add(T::one_way_anova, AnovaDesign{3, 0.6}, 0.8);

  add(T::one_proportion_z, ProportionDesign{0.5, 0.6}, 0.8);
  add(T::one_proportion_z, ProportionDesign{0.3, 0.4}, 0.8);
  add(T::one_proportion_z, ProportionDesign{0.2, 0.1}, 0.9);
  add(T::one_proportion_z, ProportionDesign{0.5, 0.7}, 0.8, 0.05, Tails::one);
  add(T::one_proportion_z, ProportionDesign{0.6, 0.75}, 0.8);

  add(T::two_proportions_z, ProportionDesign{0.18, 0.14}, 0.8);
  add(T::two_proportions_z, ProportionDesign{0.5, 0.3}, 0.8);
  add(T::two_proportions_z, ProportionDesign{0.2, 0.4}, 0.9);
  add(T::two_proportions_z, ProportionDesign{0.6, 0.8, 2.0}, 0.8);
  add(T::two_proportions_z, ProportionDesign{0.3, 0.5}, 0.8, 0.05, Tails::one);

  add(T::chi_square, ChiSquareDesign{0.3, 1}, 0.8);
  add(T::chi_square, ChiSquareDesign{0.3, 2}, 0.8);
  add(T::chi_square, ChiSquareDesign{0.5, 3}, 0.9);
  add(T::chi_square, ChiSquareDesign{0.2, 1}, 0.8, 0.01);
  add(T::chi_square, ChiSquareDesign{0.4, 4}, 0.8);

  add(T::correlation, CorrelationDesign{0.5}, 0.8);
  add(T::correlation, CorrelationDesign{0.3}, 0.8);
  add(T::correlation, CorrelationDesign{0.4}, 0.9);
  add(T::correlation, CorrelationDesign{0.6}, 0.8, 0.05, Tails::one);
  add(T::correlation, CorrelationDesign{0.25}, 0.8, 0.01);

  add(T::mann_whitney, MeanDesign{0.5, 1.0}, 0.8);
  add(T::mann_whitney, MeanDesign{1.0, 1.0}, 0.8);
  add(T::mann_whitney, MeanDesign{0.8, 1.0}, 0.9);
  add(T::mann_whitney, MeanDesign{0.5, 1.0, 2.0}, 0.8);
  add(T::mann_whitney, MeanDesign{0.6, 1.0}, 0.8, 0.05, Tails::two, normal_are);

  add(T::paired_wilcoxon, MeanDesign{0.4, 1.0}, 0.9);
  add(T::paired_wilcoxon, MeanDesign{0.5, 1.0}, 0.8);
  add(T::paired_wilcoxon, MeanDesign{1.0, 1.0}, 0.8);
  add(T::paired_wilcoxon, MeanDesign{0.6, 1.0}, 0.8, 0.05, Tails::one);
  add(T::paired_wilcoxon, MeanDesign{0.5, 1.0}, 0.8, 0.05, Tails::two, 1.5);

  add(T::kruskal_wallis, AnovaDesign{3, 0.25}, 0.8);
  add(T::kruskal_wallis, AnovaDesign{4, 0.4}, 0.8);
  add(T::kruskal_wallis, AnovaDesign{2, 0.5}, 0.9);
  add(T::kruskal_wallis, AnovaDesign{3, 0.4}, 0.8, 0.05, Tails::two, normal_are);
  add(T::kruskal_wallis, AnovaDesign{5, 0.35}, 0.8);

  auto surv = [](double hr, double pE, double pC, double k = 1.0) {
    SurvivalDesign d;
    d.hr = hr;
    d.pE = pE;
    d.pC = pC;
    d.ratio_k = k;
    return d;
  };
  add(T::log_rank, surv(2.0, 0.5, 0.7), 0.9);
  add(T::log_rank, surv(0.5, 0.5, 0.7), 0.8);
  add(T::log_rank, surv(0.6, 0.6, 0.78), 0.8);
  add(T::log_rank, surv(0.5, 0.5, 0.7, 2.0), 0.8);
  add(T::log_rank, surv(2.0, 1.0, 1.0), 0.8);

  auto cox = [](double hr, std::optional<double> prev, std::optional<double> sigma, double psi, double rho2) {
    SurvivalDesign d;
    d.hr = hr;
    d.exposure_prev = prev;
    d.sigma = sigma;
    d.psi = psi;
    d.rho2 = rho2;
    return d;
  };
  add(T::cox_ph, cox(1.5, std::nullopt, 1.0, 1.0, 0.0), 0.8);
  add(T::cox_ph, cox(2.0, 0.5, std::nullopt, 0.6, 0.0), 0.8);
  add(T::cox_ph, cox(1.8, std::nullopt, 0.5, 0.7, 0.3), 0.9);
  add(T::cox_ph, cox(0.6, 0.3, std::nullopt, 0.8, 0.0), 0.8);
  add(T::cox_ph, cox(1.4, std::nullopt, 1.0, 0.5, 0.2), 0.8);

  std::map<TestId, int> counter;
  for (auto& p : g) p.label = fmt::format("{}#{}", to_string(p.spec.test), ++counter[p.spec.test]);
  return g;
}

TestSpec null_spec(const TestSpec& spec) {
  TestSpec s = spec;
  std::visit(
      [](auto& d) {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, MeanDesign>) d.delta = 0.0;
        if constexpr (std::is_same_v<D, AnovaDesign>) d.f = 0.0;
        if constexpr (std::is_same_v<D, ProportionDesign>) d.p1 = d.p0;
        if constexpr (std::is_same_v<D, ChiSquareDesign>) d.w = 0.0;
        if constexpr (std::is_same_v<D, CorrelationDesign>) d.r = 0.0;
        if constexpr (std::is_same_v<D, SurvivalDesign>) {
          d.hr = 1.0;
          d.pE = d.pC;
        }
      },
      s.params);
  return s;
}

std::uint64_t point_seed(std::uint64_t seed, std::size_t index) { return splitmix64(seed ^ splitmix64(index + 1)); }

std::vector<RatifyRow> ratify(const std::vector<GridPoint>& grid, const RatifyOptions& opt) {
  std::vector<RatifyRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    RatifyRow row;
    row.point = grid[i];
    const auto solved = power::solve_n(grid[i].spec, grid[i].goal);
    row.n = solved.allocation;
    row.closed_form = solved.achieved_power;
    row.estimate = simulate_power({grid[i].spec, row.n, opt.replications, point_seed(opt.seed, i), opt.threads});
    const double se = row.estimate.mc_standard_error;
    row.lower = grid[i].goal.value() - 3.0 * se;
    row.upper = row.closed_form + 3.0 * se;
    row.z = se > 0.0 ? (row.estimate.p_hat - row.closed_form) / se : 0.0;
    const double p = row.estimate.p_hat;
    if (p >= row.lower && p <= row.upper) {
      row.verdict = Verdict::pass;
    } else if (is_approximate(grid[i].spec.test) && std::fabs(row.z) <= 5.0) {
      row.verdict = Verdict::flag;
    } else {
      row.verdict = Verdict::fail;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SizeRow> size_suite(const std::vector<GridPoint>& grid, const RatifyOptions& opt) {
  std::vector<SizeRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SizeRow row;
    row.point = grid[i];
    row.point.spec = null_spec(grid[i].spec);
    row.n = power::solve_n(grid[i].spec, grid[i].goal).allocation;
    row.estimate = simulate_power({row.point.spec, row.n, opt.replications, point_seed(opt.seed ^ 0x5157ULL, i), opt.threads});
    const double alpha = grid[i].spec.alpha.value();
    const double se = standard_error(alpha, opt.replications);
    row.z = (row.estimate.p_hat - alpha) / se;
    row.pass = std::fabs(row.z) <= 3.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string describe_spec(const TestSpec& spec) {
  std::string out = std::visit(
      [](const auto& d) -> std::string {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, MeanDesign>) {
          return fmt::format("delta={} sd={} ratio={}", fmt_num(d.delta), fmt_num(d.sd), fmt_num(d.ratio));
        } else if constexpr (std::is_same_v<D, AnovaDesign>) {
          return fmt::format("k={} f={}", d.k, fmt_num(d.f));
        } else if constexpr (std::is_same_v<D, ProportionDesign>) {
          return fmt::format("p0={} p1={} ratio={}", fmt_num(d.p0), fmt_num(d.p1), fmt_num(d.ratio));
        } else if constexpr (std::is_same_v<D, ChiSquareDesign>) {
          return fmt::format("w={} df={}", fmt_num(d.w), d.df);
        } else if constexpr (std::is_same_v<D, CorrelationDesign>) {
          return fmt::format("r={}", fmt_num(d.r));
        } else {
          std::string s = fmt::format("hr={}", fmt_num(d.hr));
          if (d.exposure_prev) s += fmt::format(" exposure_prev={}", fmt_num(*d.exposure_prev));
          if (d.sigma) s += fmt::format(" sigma={}", fmt_num(*d.sigma));
          if (d.exposure_prev || d.sigma) return s + fmt::format(" psi={} rho2={}", fmt_num(d.psi), fmt_num(d.rho2));
          return s + fmt::format(" pE={} pC={} ratio_k={}", fmt_num(d.pE), fmt_num(d.pC), fmt_num(d.ratio_k));
        }
      },
      spec.params);
  out += fmt::format(" alpha={} tails={}", fmt_num(spec.alpha.value()), to_string(spec.tails));
  if (is_nonparametric(spec.test)) out += fmt::format(" are={:.6g}", spec.are);
  return out;
}

namespace {
std::string arms_text(const Allocation& a) {
  std::string out;
  for (std::size_t i = 0; i < a.arms.size(); ++i) out += (i ? "," : "") + std::to_string(a.arms[i]);
  return out;
}
}  // namespace

std::string format_ratify(const std::vector<RatifyRow>& rows, bool machine) {
  std::string out;
  if (!machine) {
    out += fmt::format("{:<22} {:<14} {:>9} {:>9} {:>9} {:>8} {:>7}  {}\n", "point", "n", "goal", "closed", "p_hat",
                       "se", "z", "verdict");
  }
  for (const auto& r : rows) {
    if (machine) {
      out += fmt::format(
          "kind=ratify point={} test={} n={} goal={} closed={:.6f} p_hat={:.6f} se={:.6f} z={:.3f} lower={:.6f} "
          "upper={:.6f} replications={} seed={} verdict={} design=\"{}\"\n",
          r.point.label, to_string(r.point.spec.test), arms_text(r.n), fmt_num(r.point.goal.value()), r.closed_form,
          r.estimate.p_hat, r.estimate.mc_standard_error, r.z, r.lower, r.upper, r.estimate.replications,
          r.estimate.seed, to_string(r.verdict), describe_spec(r.point.spec));
    } else {
      out += fmt::format("{:<22} {:<14} {:>9} {:>9.6f} {:>9.6f} {:>8.6f} {:>7.3f}  {}\n", r.point.label, arms_text(r.n),
                         fmt_num(r.point.goal.value()), r.closed_form, r.estimate.p_hat, r.estimate.mc_standard_error,
                         r.z, to_string(r.verdict));
    }
  }
  if (!machine) {
    const auto count = [&](Verdict v) { return std::count_if(rows.begin(), rows.end(), [&](const auto& r) { return r.verdict == v; }); };
    out += fmt::format("{} points: {} pass, {} flag, {} fail\n", rows.size(), count(Verdict::pass), count(Verdict::flag),
                       count(Verdict::fail));
  }
  return out;
}

std::string format_size(const std::vector<SizeRow>& rows, bool machine) {
  std::string out;
  if (!machine) out += fmt::format("{:<22} {:<14} {:>7} {:>9} {:>7}  {}\n", "point", "n", "alpha", "p_hat", "z", "result");
  for (const auto& r : rows) {
    const double alpha = r.point.spec.alpha.value();
    if (machine) {
      out += fmt::format("kind=size point={} test={} n={} alpha={} p_hat={:.6f} z={:.3f} replications={} seed={} result={} "
                         "design=\"{}\"\n",
                         r.point.label, to_string(r.point.spec.test), arms_text(r.n), fmt_num(alpha), r.estimate.p_hat, r.z,
                         r.estimate.replications, r.estimate.seed, r.pass ? "pass" : "fail", describe_spec(r.point.spec));
    } else {
      out += fmt::format("{:<22} {:<14} {:>7} {:>9.6f} {:>7.3f}  {}\n", r.point.label, arms_text(r.n), fmt_num(alpha),
                         r.estimate.p_hat, r.z, r.pass ? "pass" : "fail");
    }
  }
  if (!machine) {
    const auto passed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
    out += fmt::format("{} points: {} within 3 SE of alpha, {} outside\n", rows.size(), passed,
                       static_cast<long>(rows.size()) - passed);
  }
  return out;
}

}  // namespace powerlab::mc
