#pragma once

// Reference computations for the test suite. They avoid the library's
// superoperator machinery: strings are enumerated with explicit K rho K^dagger
// products and classical quantities come from plain real matrices.

#include <algorithm>
#include <cmath>
#include <limits>
#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// One outcome in the oracle's own plain form.
struct PlainOutcome {
  double value;
  std::vector<CMatrix> kraus;
};

inline CMatrix apply_outcome(const PlainOutcome& o, const CMatrix& rho) {
  CMatrix out = CMatrix::Zero(o.kraus.front().rows(), o.kraus.front().rows());
  for (const auto& k : o.kraus) out += k * rho * k.adjoint();
  return out;
}

struct StringRecord {
  std::vector<std::size_t> outcomes;
  double sum;
  double probability;
};

/// Every outcome string of length n with its sum and probability.
inline std::vector<StringRecord> enumerate(const std::vector<PlainOutcome>& outs, const CMatrix& rho, std::size_t n) {
  std::vector<StringRecord> result;
  std::vector<std::size_t> path;
  std::function<void(const CMatrix&, double)> rec = [&](const CMatrix& state, double sum) {
    if (path.size() == n) {
      result.push_back({path, sum, state.trace().real()});
      return;
    }
    for (std::size_t w = 0; w < outs.size(); ++w) {
      path.push_back(w);
      rec(apply_outcome(outs[w], state), sum + outs[w].value);
      path.pop_back();
    }
  };
  rec(rho, 0.0);
  return result;
}

/// Pr{sum >= n a} (upper) or Pr{sum <= n a}, with a small guard for float sums.
inline double tail(const std::vector<StringRecord>& strings, std::size_t n, double a, bool upper) {
  const double t = static_cast<double>(n) * a;
  double p = 0.0;
  for (const auto& s : strings)
    if (upper ? s.sum >= t - 1e-9 : s.sum <= t + 1e-9) p += s.probability;
  return p;
}

inline double cgf(const std::vector<StringRecord>& strings, double theta) {
  double z = 0.0;
  for (const auto& s : strings) z += std::exp(theta * s.sum) * s.probability;
  return std::log(z);
}

/// Dominant eigenvalue and right eigenvector of a non-negative matrix by power iteration.
inline std::pair<double, RVector> perron(const RMatrix& m, int iterations = 20000) {
  RVector v = RVector::Ones(m.rows()) / static_cast<double>(m.rows());
  double lambda = 0.0;
  for (int i = 0; i < iterations; ++i) {
    RVector w = m * v;
    lambda = w.sum() / v.sum();
    v = w / w.sum();
  }
  return {lambda, v};
}

/// Tilted classical matrix M(j, i) = T(j, i) exp(theta x(i, j)).
inline RMatrix tilted(const RMatrix& t, const std::function<double(int, int)>& x, double theta) {
  RMatrix m = t;
  for (int i = 0; i < t.cols(); ++i)
    for (int j = 0; j < t.rows(); ++j) m(j, i) = t(j, i) * std::exp(theta * x(i, j));
  return m;
}

/// Stationary distribution of column-stochastic T.
inline RVector stationary(const RMatrix& t) { return perron(t).second; }

/// Classical fundamental matrix (I - (P - 1 pi^T))^{-1} for row-stochastic P.
inline RMatrix fundamental(const RMatrix& p, const RVector& pi) {
  const auto n = p.rows();
  return (RMatrix::Identity(n, n) - (p - RVector::Ones(n) * pi.transpose())).inverse();
}

/// Asymptotic variance of sum f(Y_k) for a stationary chain with row-stochastic P:
/// 2 <fbar, Z fbar>_pi - <fbar, fbar>_pi.
inline double chain_asymptotic_variance(const RMatrix& p, const RVector& pi, const RVector& f) {
  const RVector fb = f.array() - pi.dot(f);
  const RMatrix z = fundamental(p, pi);
  const RVector zf = z * fb;
  return 2.0 * (pi.array() * fb.array() * zf.array()).sum() - (pi.array() * fb.array().square()).sum();
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Pr{Bin(n, p) >= k}, summed in log space.
inline double binomial_upper_tail(int n, double p, int k) {
  double acc = 0.0;
  for (int j = std::max(k, 0); j <= n; ++j)
    acc += std::exp(log_binomial(n, j) + j * std::log(p) + (n - j) * std::log1p(-p));
  return acc;
}

/// Binary relative entropy KL(a || p).
inline double binary_kl(double a, double p) {
  return a * std::log(a / p) + (1.0 - a) * std::log((1.0 - a) / (1.0 - p));
}

/// Upper tail exponent bound for a fair coin in closed form (no corrections),
/// minimized by a zooming grid over (log s, log(theta - theta*)).
inline double coin_upper_exponent(double n, double a) {
  const auto phi = [](double t) { return std::log((1.0 + std::exp(t)) / 2.0); };
  const double star = std::log(a / (1.0 - a));
  const auto f = [&](double ls, double lo) {
    const double s = std::exp(ls), u = star + std::exp(lo);
    const double e = -n * ((star - u) * a - phi(star) + phi(u));
    if (!(e < 0.0)) return std::numeric_limits<double>::infinity();
    return n * (phi((1.0 + s) * u) - (1.0 + s) * phi(u)) / s - (1.0 + s) / s * std::log(-std::expm1(e));
  };
  double cs = std::log(0.01), co = std::log(0.01), hs = 8.0, ho = 8.0;
  double best = f(cs, co);
  constexpr int k = 60;
  for (int round = 0; round < 40; ++round) {
    double bs = cs, bo = co;
    for (int i = -k; i <= k; ++i)
      for (int j = -k; j <= k; ++j) {
        const double ls = std::clamp(cs + hs * i / k, std::log(1e-6), std::log(100.0));
        const double lo = std::clamp(co + ho * j / k, std::log(1e-8), std::log(10.0));
        const double v = f(ls, lo);
        if (v < best) {
          best = v;
          bs = ls;
          bo = lo;
        }
      }
    cs = bs;
    co = bo;
    hs *= 0.5;
    ho *= 0.5;
  }
  return best;
}

}  // namespace oracle
