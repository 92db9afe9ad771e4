#pragma once

// Special functions and the central / noncentral t, F and chi-square
// distributions used by every power formula.
//
// Series truncation: a Poisson-mixture series stops once a term falls below
// 1e-14 of the accumulated sum; each direction of a mode-centred series is
// capped at 100000 terms. Noncentrality above 1e4 switches to a normal-type
// approximation (see noncentral_cdf).

#include <stdexcept>
#include <string>
#include <string_view>

namespace powerlab::dist {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A probability in [0, 1]. Construction outside that range throws.
class Probability {
 public:
  constexpr Probability() = default;
  explicit Probability(double v);

  [[nodiscard]] double value() const noexcept { return value_; }
  [[nodiscard]] double complement() const noexcept { return 1.0 - value_; }

  friend bool operator==(Probability, Probability) = default;

 private:
  double value_ = 0.0;
};

enum class Kind { t, F, chisq };

std::string_view to_string(Kind kind);

/// Degrees of freedom and noncentrality. `df2` is used by F only.
/// For t the noncentrality may be negative.
struct DistParams {
  double df = 1.0;
  double df2 = 1.0;
  double ncp = 0.0;
};

inline constexpr int kMaxSeriesTerms = 100000;
inline constexpr double kSeriesRelTol = 1e-14;
inline constexpr double kExtremeNcp = 1e4;

double ln_gamma(double x);

/// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double x, double a, double b);

/// Lower regularized incomplete gamma P(a, x).
double reg_inc_gamma(double a, double x);
/// Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x).
double reg_inc_gamma_upper(double a, double x);

double normal_cdf(double z);
double normal_quantile(double p);

double central_cdf(Kind kind, double x, const DistParams& p);

/// Noncentral CDF; p.ncp is delta for t and lambda for F / chi-square.
/// ncp above kExtremeNcp is evaluated by an approximation: for t the
/// Johnson-Welch normal form, for chi-square the Sankaran power transform,
/// for F the Patnaik scaled-central reduction. Absolute error there is
/// typically below 1e-3.
double noncentral_cdf(Kind kind, double x, const DistParams& p);

/// CDF dispatching on p.ncp (central when ncp == 0).
double cdf(Kind kind, double x, const DistParams& p);

/// x such that cdf(kind, x, p) == prob, to |cdf(x) - prob| <= 1e-9.
double quantile(Kind kind, double prob, const DistParams& p);

void validate(Kind kind, const DistParams& p);

}  // namespace powerlab::dist
