#pragma once

// Finite-n bounds on -log Pr{X^n >= a} (upper tail) or -log Pr{X^n <= a}
// (lower tail) that cost a fixed number of CGF evaluations regardless of n,
// plus the large- and moderate-deviation rates they converge to.
//
// Lower bound on the exponent:
//   sup_{theta >= 0} [n theta a - n phi(theta) - dbar(theta)]
// Upper bound on the exponent, over s > 0 and theta > t* = phi'^{-1}(a):
//   n D_{1+s}(theta||0) + [dbar((1+s) theta) - (1+s) dlow(theta)] / s
//     - (1+s)/s log(1 - exp(-n D(t*||theta) + dbar(t*) - dlow(theta)))
// The (1+s) on dlow comes from the Hoelder step, where the normalizer
// phi_n(theta) enters raised to the power 1+s.
// The lower tail is the upper tail of the negated values.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>

#include "qhmm/cgf.hpp"

namespace qhmm {

enum class TailDirection { upper, lower };

inline const char* to_string(TailDirection d) { return d == TailDirection::upper ? "upper" : "lower"; }

struct UpperBoundResult {
  bool feasible = false;
  double value = std::numeric_limits<double>::infinity();
  double theta = 0.0;
  double s = 0.0;
  /// When infeasible: smallest n found feasible by doubling n.
  std::optional<std::size_t> first_feasible_n;
};

struct TailBoundReport {
  TailDirection direction = TailDirection::upper;
  double level = 0.0;
  std::size_t n = 0;
  double exponent_lower_bound = 0.0;
  double theta_lower = 0.0;
  UpperBoundResult upper;
};

/// Optimizer sizes. They fix the number of CGF evaluations per call.
struct BoundOptimizerSettings {
  std::size_t lower_grid = 41;
  std::size_t lower_golden_steps = 30;
  std::size_t s_grid = 40;
  std::size_t theta_grid = 40;
  std::size_t descent_rounds = 30;
  std::size_t golden_steps = 20;
  double s_min = 1e-3;
  double s_max = 10.0;
};

namespace detail {

/// phi seen through the sign flip theta -> sign * theta.
class SignedCgf {
 public:
  SignedCgf(const CgfProfile& p, TailDirection dir) : p_(p), sign_(dir == TailDirection::upper ? 1.0 : -1.0) {}
  double sign() const { return sign_; }
  double phi(double u) const { return p_.phi(sign_ * u); }
  double phi_prime(double u) const { return sign_ * p_.phi_prime(sign_ * u); }
  double inverse(double b) const { return sign_ * p_.phi_prime_inverse(sign_ * b); }
  Deltas deltas(double u) const { return p_.deltas(sign_ * u); }
  double cap() const { return p_.theta_cap(); }

 private:
  const CgfProfile& p_;
  double sign_;
};

template <class F>
double golden_maximize(F&& f, double lo, double hi, std::size_t steps, double& arg) {
  constexpr double g = 0.6180339887498949;
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (std::size_t i = 0; i < steps; ++i) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  if (f1 >= f2) {
    arg = x1;
    return f1;
  }
  arg = x2;
  return f2;
}

inline void check_side(double a, double mean, TailDirection dir) {
  const bool ok = dir == TailDirection::upper ? a > mean : a < mean;
  if (!ok)
    fail(ErrorKind::precondition_violated,
         std::string("wrong side of mean: ") + (dir == TailDirection::upper ? "upper" : "lower") +
             "-tail level " + std::to_string(a) + " vs phi'(0) = " + std::to_string(mean));
}

}  // namespace detail

/// Lower bound on -log Pr of the tail event, maximized over the admissible half-line.
inline double exponent_lower_bound(const CgfProfile& profile, double a, std::size_t n, TailDirection dir,
                                   double* argmax = nullptr, const BoundOptimizerSettings& opt = {}) {
  if (n == 0) fail(ErrorKind::invalid_input, "n must be at least 1");
  detail::check_side(a, profile.phi_prime(0.0), dir);
  const detail::SignedCgf cgf(profile, dir);
  const double b = cgf.sign() * a;
  const double nd = static_cast<double>(n);
  const double star = cgf.inverse(b);
  const auto objective = [&](double u) { return nd * (u * b - cgf.phi(u)) - cgf.deltas(u).upper; };

  const double closed = objective(star);
  double best = closed;
  double best_u = star;
  const double span = std::min(3.0 * star, cgf.cap());
  const double step = span / static_cast<double>(opt.lower_grid - 1);
  for (std::size_t i = 0; i < opt.lower_grid; ++i) {
    const double u = step * static_cast<double>(i);
    const double v = objective(u);
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  double refined_u = best_u;
  const double refined = detail::golden_maximize(objective, std::max(0.0, best_u - step),
                                                 std::min(span, best_u + step), opt.lower_golden_steps, refined_u);
  if (refined > best) {
    best = refined;
    best_u = refined_u;
  }
  if (argmax) *argmax = cgf.sign() * best_u;
  return best;
}

namespace detail {

struct UpperObjective {
  const SignedCgf& cgf;
  double b;
  double star;
  double phi_star;
  double dbar_star;

  double log_arg_exponent(double u, double nd) const {
    const double d_star_u = (star - u) * b - phi_star + cgf.phi(u);
    return -nd * d_star_u + dbar_star - cgf.deltas(u).lower;
  }

  double operator()(double s, double u, double nd) const {
    const double e = log_arg_exponent(u, nd);
    if (!(e < 0.0)) return std::numeric_limits<double>::infinity();
    const double renyi = (cgf.phi((1.0 + s) * u) - (1.0 + s) * cgf.phi(u)) / s;
    const double corr = (cgf.deltas((1.0 + s) * u).upper - (1.0 + s) * cgf.deltas(u).lower) / s;
    return nd * renyi + corr - (1.0 + s) / s * std::log(-std::expm1(e));
  }
};

}  // namespace detail

/// Upper bound on -log Pr of the tail event (infimum over s and theta).
inline UpperBoundResult exponent_upper_bound(const CgfProfile& profile, double a, std::size_t n, TailDirection dir,
                                             const BoundOptimizerSettings& opt = {}) {
  if (n == 0) fail(ErrorKind::invalid_input, "n must be at least 1");
  detail::check_side(a, profile.phi_prime(0.0), dir);
  const detail::SignedCgf cgf(profile, dir);
  const double b = cgf.sign() * a;
  const double star = cgf.inverse(b);
  const detail::UpperObjective f{cgf, b, star, cgf.phi(star), cgf.deltas(star).upper};
  const double nd = static_cast<double>(n);

  // theta = star + offset; (1+s) theta must stay inside the overflow cap.
  const double width = 1.0 + std::abs(star);
  const double off_min = 1e-4 * width;
  const double off_max = std::max(off_min * 10.0, std::min(4.0 * width, 0.5 * cgf.cap() - star));
  const double s_lo = std::log(opt.s_min);
  const double s_hi = std::log(opt.s_max);
  const double o_lo = std::log(off_min);
  const double o_hi = std::log(off_max);
  const auto theta_of = [&](double log_off) { return star + std::exp(log_off); };
  const auto s_limit = [&](double u) { return std::min(opt.s_max * 10.0, 0.9 * cgf.cap() / u - 1.0); };
  const auto eval = [&](double log_s, double log_off, double n_eval) {
    const double u = theta_of(log_off);
    const double s = std::exp(log_s);
    if (s > s_limit(u)) return std::numeric_limits<double>::infinity();
    try {
      return f(s, u, n_eval);
    } catch (const Error&) {
      // Far tilts can make the peripheral spectrum numerically degenerate; skip them.
      return std::numeric_limits<double>::infinity();
    }
  };

  UpperBoundResult res;
  double best = std::numeric_limits<double>::infinity();
  double best_ls = s_lo;
  double best_lo = o_lo;
  for (std::size_t j = 0; j < opt.theta_grid; ++j) {
    const double lo = o_lo + (o_hi - o_lo) * static_cast<double>(j) / static_cast<double>(opt.theta_grid - 1);
    for (std::size_t i = 0; i < opt.s_grid; ++i) {
      const double ls = s_lo + (s_hi - s_lo) * static_cast<double>(i) / static_cast<double>(opt.s_grid - 1);
      const double v = eval(ls, lo, nd);
      if (v < best) {
        best = v;
        best_ls = ls;
        best_lo = lo;
      }
    }
  }

  if (!std::isfinite(best)) {
    // Vacuous at this n: find the first feasible n by doubling, reusing the grid's theta values.
    std::size_t m = n;
    for (int k = 0; k < 60 && !res.first_feasible_n; ++k) {
      m *= 2;
      for (std::size_t j = 0; j < opt.theta_grid && !res.first_feasible_n; ++j) {
        const double lo = o_lo + (o_hi - o_lo) * static_cast<double>(j) / static_cast<double>(opt.theta_grid - 1);
        try {
          if (f.log_arg_exponent(theta_of(lo), static_cast<double>(m)) < 0.0) res.first_feasible_n = m;
        } catch (const Error&) {
        }
      }
    }
    return res;
  }

  // Coordinate descent in (log s, log offset) with golden-section line searches.
  const double s_search_lo = std::log(opt.s_min * 0.1);
  const double s_search_hi = std::log(opt.s_max * 10.0);
  const double o_search_lo = std::log(off_min * 0.01);
  const double o_search_hi = o_hi;
  const double ds0 = (s_hi - s_lo) / static_cast<double>(opt.s_grid - 1);
  const double do0 = (o_hi - o_lo) / static_cast<double>(opt.theta_grid - 1);
  for (std::size_t round = 0; round < opt.descent_rounds; ++round) {
    const double shrink = std::pow(0.85, static_cast<double>(round));
    double arg = best_ls;
    const double vs = -detail::golden_maximize([&](double ls) { return -eval(ls, best_lo, nd); },
                                               std::max(s_search_lo, best_ls - 2.0 * ds0 * shrink),
                                               std::min(s_search_hi, best_ls + 2.0 * ds0 * shrink),
                                               opt.golden_steps, arg);
    if (vs < best) {
      best = vs;
      best_ls = arg;
    }
    arg = best_lo;
    const double vo = -detail::golden_maximize([&](double lo) { return -eval(best_ls, lo, nd); },
                                               std::max(o_search_lo, best_lo - 2.0 * do0 * shrink),
                                               std::min(o_search_hi, best_lo + 2.0 * do0 * shrink),
                                               opt.golden_steps, arg);
    if (vo < best) {
      best = vo;
      best_lo = arg;
    }
  }
  res.feasible = true;
  res.value = best;
  res.s = std::exp(best_ls);
  res.theta = cgf.sign() * theta_of(best_lo);
  return res;
}

inline TailBoundReport tail_bounds(const CgfProfile& profile, double a, std::size_t n, TailDirection dir,
                                   const BoundOptimizerSettings& opt = {}) {
  TailBoundReport rep;
  rep.direction = dir;
  rep.level = a;
  rep.n = n;
  rep.exponent_lower_bound = exponent_lower_bound(profile, a, n, dir, &rep.theta_lower, opt);
  rep.upper = exponent_upper_bound(profile, a, n, dir, opt);
  return rep;
}

/// Large-deviation rate of {X^n - phi'(0) >= delta} (upper) or {<= -delta} (lower).
inline double ldp_rate(const CgfProfile& profile, double delta, TailDirection dir) {
  if (delta < 0.0) fail(ErrorKind::invalid_input, "delta must be non-negative");
  if (delta == 0.0) return 0.0;
  const double mean = profile.phi_prime(0.0);
  return profile.rate_function(dir == TailDirection::upper ? mean + delta : mean - delta);
}

/// Moderate-deviation rate delta^2 / (2 phi''(0)).
inline double mdp_rate(const CgfProfile& profile, double delta) {
  const double v = profile.phi_second(0.0);
  if (!(v > profile.variance_floor()))
    fail(ErrorKind::precondition_violated, "zero asymptotic variance: phi''(0) = " + std::to_string(v));
  return delta * delta / (2.0 * v);
}

}  // namespace qhmm
