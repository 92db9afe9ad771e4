#include "powerlab/dist.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "powerlab/roots.hpp"

namespace powerlab::dist {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kEps = 1e-16;
constexpr double kLnSqrt2 = 0.34657359027997265471;  // ln(sqrt(2))

bool finite(double v) { return std::isfinite(v); }

// Modified Lentz continued fraction for I_x(a, b); valid for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxSeriesTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw ConvergenceError(fmt::format("incomplete beta: no convergence (a={}, b={}, x={})", a, b, x));
}

// I_x(a, b) with y = 1 - x supplied separately to keep tail precision.
double inc_beta(double x, double y, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front =
      ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * std::log(x) + b * std::log(y);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, y) / b;
}

double gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < kMaxSeriesTerms; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - ln_gamma(a));
    }
  }
  throw ConvergenceError(fmt::format("incomplete gamma series: no convergence (a={}, x={})", a, x));
}

// Upper tail Q(a, x) by Lentz continued fraction; valid for x >= a + 1.
double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxSeriesTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) {
      return std::exp(-x + a * std::log(x) - ln_gamma(a)) * h;
    }
  }
  throw ConvergenceError(fmt::format("incomplete gamma fraction: no convergence (a={}, x={})", a, x));
}

// ln Gamma(1 + z) = -gamma z + sum_{k>=2} (-1)^k zeta(k) z^k / k, for |z| <= 0.2.
double ln_gamma_one_plus(double z) {
  static constexpr double kZeta[] = {
      1.644934066848226436472, 1.2020569031595942854,   1.082323233711138191516,
      1.036927755143369926331, 1.017343061984449139715, 1.00834927738192282684,
      1.004077356197944339379, 1.002008392826082214418, 1.000994575127818085337,
      1.000494188604119464559, 1.000246086553308048299, 1.000122713347578489147,
      1.000061248135058704829, 1.000030588236307020494, 1.000015282259408651872,
      1.000007637197637899762, 1.00000381729326499984,  1.000001908212716553939,
      1.000000953962033872796, 1.000000476932986787806, 1.000000238450502727733,
      1.000000119219925965311, 1.000000059608189051259, 1.000000029803503514652,
      1.000000014901554828365, 1.000000007450711789835, 1.000000003725334024788,
      1.000000001862659723513, 1.00000000093132743242,  1.000000000465662906503,
      1.000000000232831183368};
  constexpr double kEulerGamma = 0.5772156649015328606065121;
  double sum = 0.0;
  double power = -z;
  for (int k = 2; k <= 32; ++k) {
    power *= -z;
    sum += kZeta[k - 2] * power / k;
  }
  return -kEulerGamma * z + sum;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// A family f(a) of incomplete functions stepping in unit increments of a,
// with f(a) - f(a + 1) = exp(log_step(a)).
struct BetaFamily {
  double x, y, b;
  double value(double a) const { return inc_beta(x, y, a, b); }
  double log_step(double a) const {
    return ln_gamma(a + b) - ln_gamma(a + 1.0) - ln_gamma(b) + a * std::log(x) + b * std::log(y);
  }
  // log_step(a + 1) - log_step(a)
  double log_step_ratio(double a) const { return std::log(x) + std::log(a + b) - std::log(a + 1.0); }
};

struct GammaFamily {
  double z;
  double value(double a) const { return reg_inc_gamma(a, z); }
  double log_step(double a) const { return a * std::log(z) - z - ln_gamma(a + 1.0); }
  double log_step_ratio(double a) const { return std::log(z) - std::log(a + 1.0); }
};

// Walks f(a0 + j) outward from j = start in both directions, producing
// values for each visited j through the callback visit(j, f(a0+j)).
// The callback returns the magnitude of the term it accumulated and the
// walk stops in a direction once that magnitude falls below the relative
// tolerance of `scale()` (past the mode) or the cap is hit.
template <class Family, class Visit, class Scale>
void walk_mixture(const Family& fam, double a0, long start, Visit&& visit, Scale&& scale) {
  const double a_start = a0 + static_cast<double>(start);
  const double f_start = fam.value(a_start);
  const double lstep_start = fam.log_step(a_start);

  visit(start, f_start);

  // Forward: f(a + 1) = f(a) - step(a).
  {
    double f = f_start;
    double lstep = lstep_start;
    double a = a_start;
    long j = start;
    int count = 0;
    for (;;) {
      f = std::max(0.0, f - std::exp(lstep));
      lstep += fam.log_step_ratio(a);
      a += 1.0;
      ++j;
      const double term = visit(j, f);
      if (term <= kSeriesRelTol * scale() || term == 0.0) break;
      if (++count >= kMaxSeriesTerms) {
        throw ConvergenceError("noncentral series: forward term cap reached");
      }
    }
  }
  // Backward: f(a - 1) = f(a) + step(a - 1).
  {
    double f = f_start;
    double lstep = lstep_start;
    double a = a_start;
    long j = start;
    int count = 0;
    while (j > 0) {
      lstep -= fam.log_step_ratio(a - 1.0);
      a -= 1.0;
      --j;
      f = std::min(1.0, f + std::exp(lstep));
      const double bound = visit(j, f);
      if (bound <= kSeriesRelTol * scale()) break;
      if (++count >= kMaxSeriesTerms) {
        throw ConvergenceError("noncentral series: backward term cap reached");
      }
    }
  }
}

double log_poisson(double mu, long j) {
  if (mu == 0.0) return j == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return -mu + static_cast<double>(j) * std::log(mu) - ln_gamma(static_cast<double>(j) + 1.0);
}

// Poisson(lambda/2) mixture of f(a0 + j).
template <class Family>
double poisson_mixture(const Family& fam, double a0, double half_ncp) {
  const long mode = static_cast<long>(std::floor(half_ncp));
  double sum = 0.0;
  auto visit = [&](long j, double f) {
    const double w = std::exp(log_poisson(half_ncp, j));
    sum += w * f;
    // The backward direction is bounded by the Poisson weight itself.
    return j < mode ? w : w * f;
  };
  walk_mixture(fam, a0, mode, visit, [&] { return std::max(sum, kTiny); });
  return clamp01(sum);
}

// Noncentral t CDF for t >= 0.
double nct_cdf_nonneg(double t, double nu, double delta) {
  const double base = normal_cdf(-delta);
  if (t == 0.0) return base;
  const double t2 = t * t;
  const double x = t2 / (nu + t2);
  const double y = nu / (nu + t2);
  const double lam = 0.5 * delta * delta;
  const long mode = static_cast<long>(std::floor(lam));
  const BetaFamily half{x, y, 0.5 * nu};
  const BetaFamily full{x, y, 0.5 * nu};
  const double log_abs_delta = delta == 0.0 ? -std::numeric_limits<double>::infinity()
                                            : std::log(std::fabs(delta));
  const double sign = delta < 0.0 ? -1.0 : 1.0;

  double sum = 0.0;

  auto log_p = [&](long j) { return log_poisson(lam, j); };
  auto log_q = [&](long j) {
    if (lam == 0.0) {
      return j == 0 ? log_abs_delta - kLnSqrt2 - ln_gamma(1.5)
                    : -std::numeric_limits<double>::infinity();
    }
    return -lam + static_cast<double>(j) * std::log(lam) - ln_gamma(static_cast<double>(j) + 1.5) +
           log_abs_delta - kLnSqrt2;
  };

  // First family: P_j * I_x(j + 1/2, nu/2).
  auto visit_p = [&](long j, double f) {
    const double w = std::exp(log_p(j));
    sum += w * f;
    return j < mode ? w : w * f;
  };
  auto scale = [&] { return std::max(std::fabs(base + 0.5 * sum), kTiny); };
  walk_mixture(half, 0.5, mode, visit_p, scale);

  // Second family: Q_j * I_x(j + 1, nu/2).
  if (delta != 0.0) {
    auto visit_q = [&](long j, double f) {
      const double w = std::exp(log_q(j));
      sum += sign * w * f;
      return j < mode ? w : w * f;
    };
    walk_mixture(full, 1.0, mode, visit_q, scale);
  }
  return clamp01(base + 0.5 * sum);
}

double nct_cdf(double t, double nu, double delta) {
  if (std::fabs(delta) > kExtremeNcp) {
    const double z = (t * (1.0 - 1.0 / (4.0 * nu)) - delta) / std::sqrt(1.0 + t * t / (2.0 * nu));
    return normal_cdf(z);
  }
  if (t >= 0.0) return nct_cdf_nonneg(t, nu, delta);
  return clamp01(1.0 - nct_cdf_nonneg(-t, nu, -delta));
}

double ncchisq_cdf(double x, double k, double lam) {
  if (x <= 0.0) return 0.0;
  if (lam > kExtremeNcp) {
    const double kl = k + lam;
    const double k2l = k + 2.0 * lam;
    const double h = 1.0 - 2.0 * kl * (k + 3.0 * lam) / (3.0 * k2l * k2l);
    const double p = k2l / (kl * kl);
    const double m = (h - 1.0) * (1.0 - 3.0 * h);
    const double num = std::pow(x / kl, h) - (1.0 + h * p * (h - 1.0 - 0.5 * (2.0 - h) * m * p));
    const double den = h * std::sqrt(2.0 * p) * (1.0 + 0.5 * m * p);
    return normal_cdf(num / den);
  }
  return poisson_mixture(GammaFamily{0.5 * x}, 0.5 * k, 0.5 * lam);
}

double ncf_cdf(double x, double d1, double d2, double lam) {
  if (x <= 0.0) return 0.0;
  if (lam > kExtremeNcp) {
    const double nu = (d1 + lam) * (d1 + lam) / (d1 + 2.0 * lam);
    return central_cdf(Kind::F, x * d1 / (d1 + lam), DistParams{nu, d2, 0.0});
  }
  const double num = d1 * x;
  const double y = num / (num + d2);
  const double ym = d2 / (num + d2);
  return poisson_mixture(BetaFamily{y, ym, 0.5 * d2}, 0.5 * d1, 0.5 * lam);
}

}  // namespace

Probability::Probability(double v) : value_(v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError(fmt::format("probability {} outside [0, 1]", v));
  }
}

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::t: return "t";
    case Kind::F: return "F";
    case Kind::chisq: return "chisq";
  }
  return "?";
}

double ln_gamma(double x) {
  if (!(x > 0.0) || !finite(x)) {
    throw DomainError(fmt::format("ln_gamma: argument {} must be positive and finite", x));
  }
  // Near the roots at 1 and 2 the library routine loses relative accuracy.
  if (std::fabs(x - 1.0) <= 0.2) return ln_gamma_one_plus(x - 1.0);
  if (std::fabs(x - 2.0) <= 0.2) return std::log1p(x - 2.0) + ln_gamma_one_plus(x - 2.0);
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

double reg_inc_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0) || !(a > 0.0) || !(b > 0.0) || !finite(a) || !finite(b)) {
    throw DomainError(fmt::format("reg_inc_beta: invalid arguments x={}, a={}, b={}", x, a, b));
  }
  return clamp01(inc_beta(x, 1.0 - x, a, b));
}

double reg_inc_gamma(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !finite(a) || std::isnan(x)) {
    throw DomainError(fmt::format("reg_inc_gamma: invalid arguments a={}, x={}", a, x));
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return clamp01(gamma_series(a, x));
  return clamp01(1.0 - gamma_continued_fraction(a, x));
}

double reg_inc_gamma_upper(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !finite(a) || std::isnan(x)) {
    throw DomainError(fmt::format("reg_inc_gamma_upper: invalid arguments a={}, x={}", a, x));
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return clamp01(1.0 - gamma_series(a, x));
  return clamp01(gamma_continued_fraction(a, x));
}

double normal_cdf(double z) {
  if (std::isnan(z)) throw DomainError("normal_cdf: NaN argument");
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Wichura's AS 241 (PPND16).
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError(fmt::format("normal_quantile: p={} must lie strictly inside (0, 1)", p));
  }
  const double q = p - 0.5;
  double r;
  double val;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    val = q *
          (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
               45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
            133.14166789178437745) * r + 3.387132872796366608) /
          (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
               21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
            42.313330701600911252) * r + 1.0);
    return val;
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r + 4.6303378461565452959) * r +
           1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r + 2.05319162663775882187) * r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r + 5.4637849111641143699) * r +
           6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r + 0.59983220655588793769) * r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

void validate(Kind kind, const DistParams& p) {
  if (!(p.df > 0.0) || !finite(p.df)) {
    throw DomainError(fmt::format("{}: df={} must be positive", to_string(kind), p.df));
  }
  if (kind == Kind::F && (!(p.df2 > 0.0) || !finite(p.df2))) {
    throw DomainError(fmt::format("F: df2={} must be positive", p.df2));
  }
  if (!finite(p.ncp)) throw DomainError("noncentrality must be finite");
  if (kind != Kind::t && p.ncp < 0.0) {
    throw DomainError(fmt::format("{}: noncentrality {} must be nonnegative", to_string(kind), p.ncp));
  }
}

double central_cdf(Kind kind, double x, const DistParams& p) {
  validate(kind, p);
  if (std::isnan(x)) throw DomainError("cdf: NaN argument");
  switch (kind) {
    case Kind::t: {
      if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
      const double x2 = x * x;
      // P(|T| > |x|) = I_{nu/(nu+x^2)}(nu/2, 1/2)
      const double tail = 0.5 * inc_beta(p.df / (p.df + x2), x2 / (p.df + x2), 0.5 * p.df, 0.5);
      return x >= 0.0 ? 1.0 - tail : tail;
    }
    case Kind::F: {
      if (x <= 0.0) return 0.0;
      if (std::isinf(x)) return 1.0;
      const double num = p.df * x;
      return clamp01(inc_beta(num / (num + p.df2), p.df2 / (num + p.df2), 0.5 * p.df, 0.5 * p.df2));
    }
    case Kind::chisq:
      if (x <= 0.0) return 0.0;
      return reg_inc_gamma(0.5 * p.df, 0.5 * x);
  }
  return 0.0;
}

double noncentral_cdf(Kind kind, double x, const DistParams& p) {
  validate(kind, p);
  if (std::isnan(x)) throw DomainError("cdf: NaN argument");
  switch (kind) {
    case Kind::t:
      if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
      return nct_cdf(x, p.df, p.ncp);
    case Kind::F:
      if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
      return ncf_cdf(x, p.df, p.df2, p.ncp);
    case Kind::chisq:
      if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
      return ncchisq_cdf(x, p.df, p.ncp);
  }
  return 0.0;
}

double cdf(Kind kind, double x, const DistParams& p) {
  return p.ncp == 0.0 ? central_cdf(kind, x, p) : noncentral_cdf(kind, x, p);
}

double quantile(Kind kind, double prob, const DistParams& p) {
  validate(kind, p);
  if (!(prob > 0.0 && prob < 1.0)) {
    throw DomainError(fmt::format("quantile: p={} must lie strictly inside (0, 1)", prob));
  }
  auto g = [&](double x) { return cdf(kind, x, p) - prob; };

  double lo;
  double hi;
  if (kind == Kind::t) {
    const double guess = normal_quantile(prob) + p.ncp;
    double width = 1.0 + std::fabs(guess);
    lo = guess - width;
    hi = guess + width;
    int n = 0;
    while (g(lo) > 0.0) {
      lo -= width;
      width *= 2.0;
      if (++n > 200) throw roots::BracketError("t quantile: lower bracket expansion failed");
    }
    n = 0;
    while (g(hi) < 0.0) {
      hi += width;
      width *= 2.0;
      if (++n > 200) throw roots::BracketError("t quantile: upper bracket expansion failed");
    }
  } else {
    const double mean = kind == Kind::chisq ? p.df + p.ncp : 1.0 + p.ncp / p.df;
    lo = 0.0;
    hi = std::max(1.0, 2.0 * mean);
    int n = 0;
    while (g(hi) < 0.0) {
      lo = hi;
      hi *= 2.0;
      if (++n > 200) throw roots::BracketError("quantile: upper bracket expansion failed");
    }
  }
  return roots::brent(g, lo, hi, roots::Tolerance{1e-15, 1e-15, 400});
}

}  // namespace powerlab::dist
