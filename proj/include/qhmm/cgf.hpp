#pragma once

// Cumulant generating function phi(theta) = log lambda_theta of the observed
// sum, its finite-n correction terms, and the divergences built from it.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>

#include "qhmm/asymptotic_variance.hpp"
#include "qhmm/instrument.hpp"
#include "qhmm/perron_frobenius.hpp"

namespace qhmm {

struct Deltas {
  /// log Tr A_theta rho.
  double upper = 0.0;
  /// log Tr A_theta rho - log ||A_theta||.
  double lower = 0.0;
};

struct CgfBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Evaluates phi and its relatives for one instrument and initial state.
///
/// Eigendata is cached per theta (exact key). The cache takes concurrent
/// readers; a miss computes outside the lock and inserts under an exclusive
/// lock, so results never depend on evaluation order.
class CgfProfile {
 public:
  explicit CgfProfile(Instrument instr, const Tolerances& tol = {})
      : instr_(std::move(instr)), tol_(tol) {
    instr_.require_valid();
    rho_ = instr_.initial_state().matrix();
  }

  CgfProfile(Instrument instr, const DensityOperator& rho, const Tolerances& tol = {})
      : instr_(std::move(instr)), tol_(tol), rho_(rho.matrix()) {
    instr_.require_valid();
    if (rho.dim() != instr_.dim()) fail(ErrorKind::invalid_input, "initial state dimension mismatch");
  }

  CgfProfile(const CgfProfile&) = delete;
  CgfProfile& operator=(const CgfProfile&) = delete;

  const Instrument& instrument() const noexcept { return instr_; }
  const Matrix& initial_state() const noexcept { return rho_; }
  const Tolerances& tolerances() const noexcept { return tol_; }

  /// Number of eigendata computations (cache misses) so far.
  std::size_t evaluations() const noexcept { return misses_.load(); }

  const PerronFrobeniusData& eigendata(double theta) const {
    {
      std::shared_lock lock(mutex_);
      const auto it = cache_.find(theta);
      if (it != cache_.end()) return it->second;
    }
    PerronFrobeniusData pf = pf_eigendata(instr_, theta, tol_);
    std::unique_lock lock(mutex_);
    const auto [it, inserted] = cache_.emplace(theta, std::move(pf));
    if (inserted) ++misses_;
    return it->second;
  }

  double phi(double theta) const { return eigendata(theta).log_lambda; }

  Deltas deltas(double theta) const {
    const auto& pf = eigendata(theta);
    const double tr = (pf.a_op * rho_).trace().real();
    Deltas out;
    out.upper = std::log(tr);
    out.lower = out.upper - std::log(pf.a_norm);
    return out;
  }

  /// (n phi + delta_lower, n phi + delta_upper).
  CgfBounds finite_n_cgf_bounds(double theta, std::size_t n) const {
    if (n == 0) fail(ErrorKind::invalid_input, "n must be at least 1");
    const double base = static_cast<double>(n) * phi(theta);
    const Deltas dl = deltas(theta);
    return {base + dl.lower, base + dl.upper};
  }

  /// Hellmann-Feynman derivative Tr A Lambda'_theta(rho) / (lambda Tr A rho).
  double phi_prime(double theta) const {
    const auto& pf = eigendata(theta);
    const Vector r = vec(pf.rho);
    double num = 0.0;
    for (std::size_t w = 0; w < instr_.size(); ++w) {
      const double x = instr_.value(w);
      if (x == 0.0) continue;
      const double weight = x * std::exp(theta * x - pf.log_lambda);
      const Matrix image = unvec(instr_.map(w).matrix() * r, instr_.dim());
      num += weight * (pf.a_op * image).trace().real();
    }
    return num / (pf.a_op * pf.rho).trace().real();
  }

  /// Central second difference of phi with one Richardson step.
  double phi_second_finite_difference(double theta, double h = 1e-4) const {
    const auto d2 = [&](double step) {
      return (phi(theta + step) - 2.0 * phi(theta) + phi(theta - step)) / (step * step);
    };
    return (4.0 * d2(0.5 * h) - d2(h)) / 3.0;
  }

  /// phi''(theta); exact at theta = 0 for primitive instruments.
  double phi_second(double theta) const {
    if (theta == 0.0 && is_primitive()) return exact_variance();
    return phi_second_finite_difference(theta);
  }

  /// Below this, phi''(0) is indistinguishable from zero (the finite-difference path carries eps / h^2 roundoff).
  double variance_floor() const {
    const double scale = 1.0 + instr_.max_abs_value() * instr_.max_abs_value();
    return (is_primitive() ? 1e-10 : 1e-6) * scale;
  }

  bool is_primitive() const {
    std::call_once(primitive_once_, [&] { primitive_ = classify(total_map(instr_), tol_).primitive; });
    return primitive_;
  }

  /// phi'^{-1}(a) by bracket doubling and bisection on the increasing phi'.
  double phi_prime_inverse(double a) const;

  /// D(theta || bar) = (theta - bar) phi'(theta) - phi(theta) + phi(bar).
  double bregman(double theta, double bar) const {
    return (theta - bar) * phi_prime(theta) - phi(theta) + phi(bar);
  }

  /// D_{1+s}(theta || bar) = [phi((1+s) theta - s bar) - (1+s) phi(theta) + s phi(bar)] / s.
  double renyi_bregman(double s, double theta, double bar) const {
    if (!(s > 0.0)) fail(ErrorKind::invalid_input, "Renyi order parameter s must be positive");
    return (phi((1.0 + s) * theta - s * bar) - (1.0 + s) * phi(theta) + s * phi(bar)) / s;
  }

  /// Legendre transform at level a, attained at theta = phi'^{-1}(a).
  double rate_function(double a) const {
    if (a == phi_prime(0.0)) return 0.0;
    const double t = phi_prime_inverse(a);
    if (t == 0.0) return 0.0;
    return std::max(0.0, t * a - phi(t));
  }

  /// Largest |theta| for which every tilt factor stays below e^700.
  double theta_cap() const {
    const double m = instr_.max_abs_value();
    return m > 0.0 ? 700.0 / m : 0.0;
  }

 private:
  double exact_variance() const {
    std::call_once(variance_once_, [&] { variance_ = asymptotic_variance(instr_, tol_); });
    return variance_;
  }

  Instrument instr_;
  Tolerances tol_;
  Matrix rho_;
  mutable std::shared_mutex mutex_;
  mutable std::map<double, PerronFrobeniusData> cache_;
  mutable std::atomic<std::size_t> misses_{0};
  mutable std::once_flag primitive_once_;
  mutable bool primitive_ = false;
  mutable std::once_flag variance_once_;
  mutable double variance_ = 0.0;
};

inline double CgfProfile::phi_prime_inverse(double a) const {
  const double mean = phi_prime(0.0);
  if (a == mean) return 0.0;
  const double dir = a > mean ? 1.0 : -1.0;
  const double cap = theta_cap();
  const auto gap = [&](double t) { return dir * (phi_prime(dir * t) - a); };  // increasing in t

  double hi = std::min(1.0, cap);
  if (!(hi > 0.0) || dir * (phi_prime(dir * hi) - mean) <= 1e-10 * hi)
    fail(ErrorKind::precondition_violated, "degenerate CGF: phi is affine, phi' is constant at " + std::to_string(mean));
  double lo = 0.0;
  while (gap(hi) < 0.0) {
    if (hi >= cap)
      fail(ErrorKind::precondition_violated,
           "unreachable level: " + std::to_string(a) + " is outside the range of phi'");
    lo = hi;
    hi = std::min(2.0 * hi, cap);
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = gap(mid);
    if (std::abs(g) <= 1e-13) return dir * mid;
    if (g < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double best = std::abs(gap(lo)) < std::abs(gap(hi)) ? lo : hi;
  return dir * best;
}

}  // namespace qhmm
