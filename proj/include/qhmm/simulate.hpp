#pragma once

// Sampling of the measurement process and exact oracles for the law of the
// observed sum: the CGF log Tr Lambda_theta^n(rho) and the joint law of
// (n X^n, hidden state) by dynamic programming over sum values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qhmm/deviation_bounds.hpp"
#include "qhmm/instrument.hpp"

namespace qhmm {

// ---- trajectories -------------------------------------------------------------

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<std::size_t> outcomes;
  std::vector<double> values;
  /// Post-measurement states, when requested.
  std::vector<Matrix> states;
  /// Set when sampling stopped early (numerically zero total probability).
  std::optional<std::string> diagnostic;
};

/// SplitMix64 finalizer, used to derive an independent stream per trajectory.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Worker count from QHMM_THREADS (default: hardware concurrency).
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QHMM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
  }
  return hw;
}

/// Runs body(i) for i in [0, count) on worker_count() threads.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += workers) body(i);
    });
  for (auto& th : pool) th.join();
}

/// Step-by-step sampler of the instrument process; reusable buffers, one instance per thread.
class TrajectorySampler {
 public:
  TrajectorySampler(const Instrument& instr, const Matrix& rho) : start_(vec(rho)) {
    instr.require_valid();
    if (static_cast<std::size_t>(rho.rows()) != instr.dim()) fail(ErrorKind::invalid_input, "state dimension mismatch");
    for (std::size_t w = 0; w < instr.size(); ++w) {
      maps_.push_back(instr.map(w).matrix());
      effects_.push_back(vec(instr.effect(w)));  // dot() conjugates: Tr(E sigma)
    }
    probs_.resize(instr.size());
  }

  /// Samples n steps with the stream for (seed, trial); calls step(w) after each outcome.
  /// Returns false (and fills `diagnostic`) if the total probability vanishes.
  template <class StepFn>
  bool run(std::size_t n, std::uint64_t stream_seed, StepFn&& step, std::string* diagnostic = nullptr) {
    std::mt19937_64 rng(stream_seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    state_ = start_;
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t w = 0; w < probs_.size(); ++w) {
        probs_[w] = std::max(0.0, effects_[w].dot(state_).real());
        total += probs_[w];
      }
      if (total < 1e-14) {
        if (diagnostic) *diagnostic = "total outcome probability vanished at step " + std::to_string(i);
        return false;
      }
      const double u = uni(rng) * total;
      std::size_t w = 0;
      double acc = probs_[0];
      while (acc <= u && w + 1 < probs_.size()) acc += probs_[++w];
      next_.noalias() = maps_[w] * state_;
      state_ = next_ / probs_[w];
      step(w, state_);
    }
    return true;
  }

 private:
  Vector start_;
  std::vector<Matrix> maps_;
  std::vector<Vector> effects_;
  std::vector<double> probs_;
  Vector state_;
  Vector next_;
};

/// One trajectory of length n from the stream (seed, trial).
inline Trajectory sample_trajectory(const Instrument& instr, const Matrix& rho, std::size_t n, std::uint64_t seed,
                                    std::size_t trial, bool keep_states = false) {
  TrajectorySampler sampler(instr, rho);
  Trajectory t;
  t.seed = mix_seed(seed, trial);
  t.outcomes.reserve(n);
  t.values.reserve(n);
  std::string diag;
  const bool ok = sampler.run(
      n, t.seed,
      [&](std::size_t w, const Vector& state) {
        t.outcomes.push_back(w);
        t.values.push_back(instr.value(w));
        if (keep_states) t.states.push_back(unvec(state, instr.dim()));
      },
      &diag);
  if (!ok) t.diagnostic = diag;
  return t;
}

/// Streams `trials` trajectories to `sink` in trial order.
inline void sample_trajectories(const Instrument& instr, const Matrix& rho, std::size_t n, std::size_t trials,
                                std::uint64_t seed, const std::function<void(std::size_t, const Trajectory&)>& sink,
                                bool keep_states = false) {
  for (std::size_t i = 0; i < trials; ++i) sink(i, sample_trajectory(instr, rho, n, seed, i, keep_states));
}

/// Sample means X^n of `trials` independent trajectories (parallel, deterministic).
inline std::vector<double> sample_means(const Instrument& instr, const Matrix& rho, std::size_t n, std::size_t trials,
                                        std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::invalid_input, "n must be at least 1");
  std::vector<double> means(trials);
  const unsigned workers = worker_count();
  std::vector<std::string> errors(workers);
  parallel_for(workers, [&](std::size_t t) {
    TrajectorySampler sampler(instr, rho);
    for (std::size_t i = t; i < trials; i += workers) {
      double sum = 0.0;
      std::string diag;
      if (!sampler.run(n, mix_seed(seed, i), [&](std::size_t w, const Vector&) { sum += instr.value(w); }, &diag)) {
        errors[t] = diag;
        return;
      }
      means[i] = sum / static_cast<double>(n);
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::numerical, e);
  return means;
}

// ---- exact oracles ------------------------------------------------------------

/// log Tr Lambda_theta^n(rho), rescaling every step.
inline double exact_cgf(const Instrument& instr, const Matrix& rho, double theta, std::size_t n) {
  instr.require_valid();
  if (theta == 0.0) return 0.0;  // trace preserving
  const double shift = theta > 0.0 ? instr.max_value() : (theta < 0.0 ? instr.min_value() : 0.0);
  const Matrix s = weighted_sum_matrix(instr, [&](double x) { return std::exp(theta * (x - shift)); });
  Vector v = vec(rho);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Vector next = s * v;
    const double tr = unvec(next, instr.dim()).trace().real();
    if (!(tr > 0.0)) return -std::numeric_limits<double>::infinity();
    acc += std::log(tr);
    v = next / tr;
  }
  return acc + static_cast<double>(n) * theta * shift;
}

/// Joint law of the sum s = n X^n and the hidden state: Pr{n X^n = s} = Tr rho_s.
/// Sum values are keyed on a 1e-12 grid (integer keys, no drift).
struct SumDistribution {
  static constexpr double key_scale = 1e-12;

  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<std::int64_t> keys;  // ascending
  Matrix atoms;                    // column k = vec(rho_{keys[k]})

  std::size_t size() const noexcept { return keys.size(); }
  double sum_value(std::size_t k) const { return static_cast<double>(keys[k]) * key_scale; }
  double probability(std::size_t k) const {
    return unvec(atoms.col(static_cast<Eigen::Index>(k)), dim).trace().real();
  }
  Matrix atom(std::size_t k) const { return unvec(atoms.col(static_cast<Eigen::Index>(k)), dim); }
  double total_probability() const {
    double t = 0.0;
    for (std::size_t k = 0; k < size(); ++k) t += probability(k);
    return t;
  }
};

struct OracleLimits {
  /// Cap on (number of aggregated atoms) * d^2 at any step.
  double max_storage = 1e8;
};

inline std::int64_t sum_key(double x) {
  const double scaled = x / SumDistribution::key_scale;
  if (!(std::abs(scaled) < 9.0e18)) fail(ErrorKind::invalid_input, "value too large for the 1e-12 sum grid");
  return std::llround(scaled);
}

/// rho'_{s + x_w} += C_w(rho_s), starting from rho_0 = rho.
inline SumDistribution exact_sum_distribution(const Instrument& instr, const Matrix& rho, std::size_t n,
                                              const OracleLimits& limits = {}) {
  instr.require_valid();
  const std::size_t d2 = instr.dim() * instr.dim();
  std::vector<std::int64_t> shifts;
  for (std::size_t w = 0; w < instr.size(); ++w) shifts.push_back(sum_key(instr.value(w)));
  const double bound = static_cast<double>(n) * instr.max_abs_value() / SumDistribution::key_scale;
  if (!(bound < 9.0e18)) fail(ErrorKind::precondition_violated, "sum range exceeds the integer key grid");

  SumDistribution dist;
  dist.n = 0;
  dist.dim = instr.dim();
  dist.keys = {0};
  dist.atoms = vec(rho);

  std::vector<std::int64_t> merged;
  for (std::size_t step = 0; step < n; ++step) {
    merged.clear();
    for (const auto sh : shifts)
      for (const auto k : dist.keys) merged.push_back(k + sh);
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    if (static_cast<double>(merged.size()) * static_cast<double>(d2) > limits.max_storage)
      fail(ErrorKind::precondition_violated,
           "sum-distribution cap exceeded at step " + std::to_string(step + 1) + " (" +
               std::to_string(merged.size()) + " atoms)");
    Matrix next = Matrix::Zero(static_cast<Eigen::Index>(d2), static_cast<Eigen::Index>(merged.size()));
    for (std::size_t w = 0; w < shifts.size(); ++w) {
      const Matrix image = instr.map(w).matrix() * dist.atoms;
      std::size_t pos = 0;
      for (std::size_t k = 0; k < dist.keys.size(); ++k) {
        const auto target = dist.keys[k] + shifts[w];
        while (merged[pos] < target) ++pos;
        next.col(static_cast<Eigen::Index>(pos)) += image.col(static_cast<Eigen::Index>(k));
      }
    }
    dist.keys.swap(merged);
    dist.atoms = std::move(next);
    dist.n = step + 1;
  }
  return dist;
}

/// Pr{X^n >= a} (upper) or Pr{X^n <= a} (lower) from an exact sum distribution.
inline double exact_tail(const SumDistribution& dist, double a, TailDirection dir) {
  const std::int64_t threshold = sum_key(static_cast<double>(dist.n) * a);
  double p = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const bool in = dir == TailDirection::upper ? dist.keys[k] >= threshold : dist.keys[k] <= threshold;
    if (in) p += dist.probability(k);
  }
  return p;
}

inline double exact_tail(const Instrument& instr, const Matrix& rho, std::size_t n, double a, TailDirection dir,
                         const OracleLimits& limits = {}) {
  return exact_tail(exact_sum_distribution(instr, rho, n, limits), a, dir);
}

/// phi_n(delta / sqrt(n)) - delta sqrt(n) phi'(0), which tends to delta^2 phi''(0) / 2.
inline double scaled_cgf_check(const CgfProfile& profile, double delta, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  return exact_cgf(profile.instrument(), profile.initial_state(), delta / rn, n) - delta * rn * profile.phi_prime(0.0);
}

/// Kolmogorov-Smirnov distance between a sample and N(0, variance).
inline double ks_distance_to_gaussian(std::vector<double> sample, double variance) {
  if (sample.empty()) fail(ErrorKind::invalid_input, "empty sample");
  std::sort(sample.begin(), sample.end());
  const double sd = std::sqrt(variance);
  const double m = static_cast<double>(sample.size());
  double ks = 0.0;
  std::size_t i = 0;
  while (i < sample.size()) {
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    const double cdf = 0.5 * std::erfc(-sample[i] / (sd * std::sqrt(2.0)));
    ks = std::max({ks, std::abs(static_cast<double>(i) / m - cdf), std::abs(static_cast<double>(j) / m - cdf)});
    i = j;
  }
  return ks;
}

struct CltReport {
  double mean = 0.0;
  double variance = 0.0;
  double ks = 0.0;
  std::vector<double> sample_means;
};

/// KS distance between the empirical law of sqrt(n)(X^n - phi'(0)) and N(0, phi''(0)).
inline CltReport clt_check(const CgfProfile& profile, std::size_t n, std::size_t trials, std::uint64_t seed) {
  CltReport rep;
  rep.mean = profile.phi_prime(0.0);
  rep.variance = profile.phi_second(0.0);
  if (!(rep.variance > profile.variance_floor()))
    fail(ErrorKind::precondition_violated, "zero-variance instrument: phi''(0) = " + std::to_string(rep.variance));
  rep.sample_means = sample_means(profile.instrument(), profile.initial_state(), n, trials, seed);
  std::vector<double> z(rep.sample_means.size());
  const double rn = std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rn * (rep.sample_means[i] - rep.mean);
  rep.ks = ks_distance_to_gaussian(std::move(z), rep.variance);
  return rep;
}

}  // namespace qhmm
