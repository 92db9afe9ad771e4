#pragma once

// Root finding on monotone maps: Brent's method on a sign-changing bracket,
// outward bracket expansion, and the smallest integer satisfying a monotone
// predicate.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

namespace powerlab::roots {

class BracketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tolerance {
  double abs_x = 1e-14;
  double rel_x = 4 * std::numeric_limits<double>::epsilon();
  int max_iterations = 300;
};

/// Brent-Dekker zero of f on [a, b]; f(a) and f(b) must differ in sign.
template <class F>
double brent(F&& f, double a, double b, Tolerance tol = {}) {
  double fa = f(a);
  double fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw BracketError("brent: root is not bracketed");

  double c = a, fc = fa;
  double d = b - a, e = d;
  for (int it = 0; it < tol.max_iterations; ++it) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double eps = 2 * tol.rel_x * std::fabs(b) + 0.5 * tol.abs_x;
    const double m = 0.5 * (c - b);
    if (std::fabs(m) <= eps || fb == 0.0) return b;

    if (std::fabs(e) >= eps && std::fabs(fa) > std::fabs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2 * m * s;
        q = 1 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2 * m * q * (q - r) - (b - a) * (r - 1));
        q = (q - 1) * (r - 1) * (s - 1);
      }
      if (p > 0) q = -q; else p = -p;
      if (2 * p < std::min(3 * m * q - std::fabs(eps * q), std::fabs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += (std::fabs(d) > eps) ? d : (m > 0 ? eps : -eps);
    fb = f(b);
  }
  return b;
}

/// Expands [lo, hi] geometrically away from `lo` until the increasing map
/// g crosses `target`. Returns the bracket. `limit` caps hi.
template <class G>
std::pair<double, double> bracket_increasing(G&& g, double target, double lo, double hi,
                                             double limit, int max_expansions = 200) {
  for (int i = 0; i < max_expansions; ++i) {
    if (g(hi) >= target) return {lo, hi};
    lo = hi;
    hi = std::min(limit, hi * 2.0 + 1.0);
    if (lo >= limit) break;
  }
  throw BracketError("bracket expansion failed");
}

/// Smallest n >= lo with pred(n) true, pred monotone (false ... true).
/// Doubling from lo, then integer bisection. Returns nullopt when pred is
/// still false at `cap`.
template <class P>
std::optional<std::int64_t> min_integer(P&& pred, std::int64_t lo,
                                        std::int64_t cap = std::int64_t{1} << 40) {
  if (pred(lo)) return lo;
  std::int64_t bad = lo;
  std::int64_t step = 1;
  std::int64_t good = lo + step;
  while (!pred(good)) {
    bad = good;
    if (good >= cap) return std::nullopt;
    step *= 2;
    good = std::min(cap, lo + step);
  }
  while (good - bad > 1) {
    const std::int64_t mid = bad + (good - bad) / 2;
    if (pred(mid)) good = mid; else bad = mid;
  }
  return good;
}

}  // namespace powerlab::roots
