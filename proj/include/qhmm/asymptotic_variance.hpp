#pragma once

// Fundamental matrix Z = (iota - (Lambda - Lambda~))^{-1} of a primitive
// instrument and the asymptotic variance
//   phi''(0) = V_{rho0}[X] + 2 Tr C_X (Z - Lambda~) C_X (rho0).

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/LU>

#include "qhmm/instrument.hpp"
#include "qhmm/perron_frobenius.hpp"

namespace qhmm {

struct FundamentalData {
  /// Stationary state of Lambda.
  Matrix rho0;
  SuperOperator lambda;
  /// H -> (Tr H) rho0.
  SuperOperator lambda_tilde;
  SuperOperator z;
  /// Spectral radius of Lambda - Lambda~, i.e. the second eigenvalue modulus of Lambda.
  double second_modulus = 0.0;
  /// Set when the mixing is so slow that the inversion is ill-conditioned.
  bool ill_conditioned = false;
};

/// Lambda~ for a stationary state rho0: vec(rho0) vec(I)^dagger.
inline SuperOperator stationary_projector(const Matrix& rho0) {
  const auto d = static_cast<std::size_t>(rho0.rows());
  const Vector id = vec(Matrix::Identity(rho0.rows(), rho0.cols()));
  return SuperOperator(d, vec(rho0) * id.adjoint());
}

inline FundamentalData fundamental_data(const Instrument& instr, const Tolerances& tol = {}) {
  instr.require_valid();
  const SuperOperator lambda = total_map(instr);
  const Classification cls = classify(lambda, tol);
  if (!cls.primitive)
    fail(ErrorKind::precondition_violated,
         std::string("not primitive: ") +
             (cls.irreducible ? "the total map is irreducible but periodic (peripheral spectrum has " +
                                    std::to_string(cls.map.peripheral_spectrum.size()) +
                                    " eigenvalues), so Lambda^n does not converge"
                              : "the total map is not irreducible"));
  const PerronFrobeniusData pf = pf_eigendata(instr, 0.0, tol);
  FundamentalData fd{pf.rho, lambda, stationary_projector(pf.rho), SuperOperator::zero(instr.dim()), 0.0, false};
  const Matrix diff = lambda.matrix() - fd.lambda_tilde.matrix();
  fd.second_modulus = spectral_radius(SuperOperator(instr.dim(), diff));
  fd.ill_conditioned = fd.second_modulus > 1.0 - 1e-6;
  const auto n = diff.rows();
  const Matrix gen = Matrix::Identity(n, n) - diff;
  fd.z = SuperOperator(instr.dim(), gen.partialPivLu().inverse());
  return fd;
}

/// Truncated Neumann series sum_{k<terms} (Lambda - Lambda~)^k.
inline SuperOperator neumann_fundamental(const FundamentalData& fd, std::size_t terms) {
  const Matrix diff = fd.lambda.matrix() - fd.lambda_tilde.matrix();
  const auto n = diff.rows();
  Matrix sum = Matrix::Zero(n, n);
  Matrix power = Matrix::Identity(n, n);
  for (std::size_t k = 0; k < terms; ++k) {
    sum += power;
    power = diff * power;
  }
  return SuperOperator(fd.lambda.dim(), std::move(sum));
}

namespace detail {

inline double trace_of(const Vector& v, std::size_t d) { return unvec(v, d).trace().real(); }

}  // namespace detail

/// Mean and variance of one observation X under state rho.
struct SingleStepMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline SingleStepMoments single_step_moments(const Instrument& instr, const Matrix& rho) {
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t w = 0; w < instr.size(); ++w) {
    const double p = (instr.effect(w) * rho).trace().real();
    m1 += instr.value(w) * p;
    m2 += instr.value(w) * instr.value(w) * p;
  }
  return {m1, m2 - m1 * m1};
}

struct VarianceBreakdown {
  double single_step_variance = 0.0;
  /// 2 Tr C_X (Z - Lambda~) C_X (rho0).
  double correction = 0.0;
  double total = 0.0;
};

inline VarianceBreakdown asymptotic_variance_breakdown(const Instrument& instr, const Tolerances& tol = {}) {
  const FundamentalData fd = fundamental_data(instr, tol);
  const Matrix cx = weighted_map(instr).matrix();
  const Vector v = cx * vec(fd.rho0);
  const Vector w = cx * ((fd.z.matrix() - fd.lambda_tilde.matrix()) * v);
  VarianceBreakdown out;
  out.single_step_variance = single_step_moments(instr, fd.rho0).variance;
  out.correction = 2.0 * detail::trace_of(w, instr.dim());
  out.total = out.single_step_variance + out.correction;
  return out;
}

/// phi''(0) from the fundamental matrix.
inline double asymptotic_variance(const Instrument& instr, const Tolerances& tol = {}) {
  return asymptotic_variance_breakdown(instr, tol).total;
}

/// Exact Var_rho[n X^n], by accumulating the covariances E[X_i X_j] with
/// repeated map applications (O(n) applications, no outcome enumeration).
/// For a stationary rho this is n V_rho[X] + 2 sum_k (n-k-1) Tr C_X (Lambda^k - Lambda~) C_X (rho).
inline double finite_n_variance(const Instrument& instr, const Matrix& rho, std::size_t n) {
  instr.require_valid();
  if (n == 0) return 0.0;
  const std::size_t d = instr.dim();
  const Matrix lambda = total_map(instr).matrix();
  const Matrix cx = weighted_map(instr).matrix();
  const Matrix cx2 = weighted_sum_matrix(instr, [](double x) { return x * x; });

  // Centered form: Cov(X_i, X_j) = Tr C_X Lambda^{j-i-1} (C_X - m_i Lambda)(state_i) - m_j Tr(...),
  // with state_i = Lambda^{i-1}(rho); centering keeps the summands O(1).
  Vector state = vec(rho);
  Vector pending = Vector::Zero(state.size());
  double single = 0.0;
  double cross = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const Vector cxs = cx * state;
    const double m = detail::trace_of(cxs, d);
    single += detail::trace_of(cx2 * state, d) - m * m;
    const Vector next = lambda * state;
    if (j > 1) cross += detail::trace_of(cx * pending, d) - m * detail::trace_of(pending, d);
    pending = lambda * pending + cxs - m * next;
    state = next;
  }
  return single + 2.0 * cross;
}

}  // namespace qhmm
