#pragma once

// Perron-Frobenius eigendata of tilted instrument maps and the
// irreducible / primitive classification of completely positive maps.
//
// Decision rule: a CP map is irreducible when r > 0, the eigenvalue r has
// geometric multiplicity one, and both the map and its adjoint have strictly
// positive definite eigenvectors at r. It is primitive when the same holds for
// the map tensored with itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "qhmm/instrument.hpp"
#include "qhmm/operator_core.hpp"

namespace qhmm {

enum class Verdict { yes, no, indeterminate };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "?";
}

/// Eigenvalue spread of a Hermitianized eigenvector.
struct PositivityMargin {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  /// min / max; the eigenvector is strictly positive when this exceeds the tolerance band.
  double relative = 0.0;
  Verdict positive = Verdict::no;
};

/// Spectral analysis of one map at its spectral radius.
struct SpectralDiagnostics {
  double spectral_radius = 0.0;
  std::vector<Complex> peripheral_spectrum;
  /// Eigenvalues within tol * r of r.
  std::size_t cluster_size = 0;
  /// dim ker(M - r), rank-revealed.
  std::size_t geometric_multiplicity = 0;
  PositivityMargin right;
  PositivityMargin left;
  Verdict verdict = Verdict::no;
};

struct Classification {
  bool irreducible = false;
  bool primitive = false;
  Verdict irreducible_verdict = Verdict::no;
  Verdict primitive_verdict = Verdict::no;
  SpectralDiagnostics map;
  SpectralDiagnostics squared;
};

namespace detail {

struct NullSpace {
  std::size_t nullity = 0;
  Vector vector;  // right singular vector of the smallest singular value
};

inline NullSpace null_space(const Matrix& m, double threshold) {
  NullSpace out;
  if (m.rows() <= 64) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) <= threshold) ++out.nullity;
    out.vector = svd.matrixV().col(m.cols() - 1);
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) <= threshold) ++out.nullity;
    out.vector = svd.matrixV().col(m.cols() - 1);
  }
  return out;
}

/// Turns e^{i a} H (H Hermitian) back into H, with non-negative trace.
inline Matrix hermitian_eigenvector(const Vector& v, std::size_t d) {
  Matrix x = unvec(v, d);
  Eigen::Index k = 0;
  x.diagonal().cwiseAbs().maxCoeff(&k);
  const Complex pivot = x(k, k);
  if (std::abs(pivot) > 0.0) x *= std::conj(pivot) / std::abs(pivot);
  Matrix h = hermitian_part(x);
  if (h.trace().real() < 0.0) h = -h;
  const double scale = h.cwiseAbs().maxCoeff();
  if (scale > 0.0) h /= scale;
  return h;
}

inline PositivityMargin positivity_margin(const Matrix& h, const Tolerances& tol) {
  PositivityMargin pm;
  const RealVector ev = hermitian_eigenvalues(h);
  pm.min_eigenvalue = ev.minCoeff();
  pm.max_eigenvalue = ev.maxCoeff();
  if (pm.max_eigenvalue <= 0.0) {
    pm.relative = -1.0;
    pm.positive = Verdict::no;
    return pm;
  }
  pm.relative = pm.min_eigenvalue / pm.max_eigenvalue;
  if (pm.relative > tol.positivity)
    pm.positive = Verdict::yes;
  else if (pm.relative < -tol.positivity)
    pm.positive = Verdict::no;
  else
    pm.positive = Verdict::indeterminate;
  return pm;
}

inline Verdict combine(Verdict a, Verdict b) {
  if (a == Verdict::no || b == Verdict::no) return Verdict::no;
  if (a == Verdict::indeterminate || b == Verdict::indeterminate) return Verdict::indeterminate;
  return Verdict::yes;
}

}  // namespace detail

/// Spectral-radius eigenvector analysis of a square map (condition I-ii).
inline SpectralDiagnostics analyze_spectrum(const SuperOperator& m, const Tolerances& tol = {}) {
  SpectralDiagnostics diag;
  const Vector ev = superoperator_eigenvalues(m);
  const double r = ev.cwiseAbs().maxCoeff();
  if (!std::isfinite(r)) fail(ErrorKind::numerical, "eigenvalues are not finite");
  diag.spectral_radius = r;
  if (r <= 0.0) return diag;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i)) >= r * (1.0 - tol.eigenvalue)) diag.peripheral_spectrum.push_back(ev(i));
    if (std::abs(ev(i) - r) <= tol.eigenvalue * r) ++diag.cluster_size;
  }
  const auto n = m.matrix().rows();
  const Matrix shifted = m.matrix() - Complex(r) * Matrix::Identity(n, n);
  const auto right = detail::null_space(shifted, tol.eigenvalue * r);
  diag.geometric_multiplicity = right.nullity;
  const auto left = detail::null_space(shifted.adjoint(), tol.eigenvalue * r);
  diag.right = detail::positivity_margin(detail::hermitian_eigenvector(right.vector, m.dim()), tol);
  diag.left = detail::positivity_margin(detail::hermitian_eigenvector(left.vector, m.dim()), tol);
  if (diag.geometric_multiplicity != 1)
    diag.verdict = Verdict::no;
  else
    diag.verdict = detail::combine(diag.right.positive, diag.left.positive);
  return diag;
}

/// Irreducibility from the map itself, primitivity from its tensor square.
inline Classification classify(const SuperOperator& m, const Tolerances& tol = {}) {
  if (!m.is_square()) fail(ErrorKind::invalid_input, "classify: map must be square");
  if (!is_completely_positive(m, tol)) fail(ErrorKind::invalid_input, "classify: map is not completely positive");
  Classification c;
  c.map = analyze_spectrum(m, tol);
  c.irreducible_verdict = c.map.verdict;
  if (c.irreducible_verdict != Verdict::no) {
    c.squared = analyze_spectrum(tensor(m, m), tol);
    c.primitive_verdict = detail::combine(c.irreducible_verdict, c.squared.verdict);
  }
  c.irreducible = c.irreducible_verdict == Verdict::yes;
  c.primitive = c.primitive_verdict == Verdict::yes;
  return c;
}

struct PositivityImprovingReport {
  std::size_t trials = 0;
  std::size_t power = 0;
  /// Smallest min-eig / max-eig over all outputs.
  double min_relative_eigenvalue = 0.0;
  /// Some output was not strictly positive: the map is not irreducible.
  bool refuted = false;
};

/// (iota + M)^{D^2 - 1}(rho) for one state, D = dim of M; returns min-eig / max-eig.
inline double positivity_improving_margin(const SuperOperator& m, const Matrix& rho) {
  const std::size_t power = m.dim() * m.dim() - 1;
  Vector v = vec(rho);
  for (std::size_t k = 0; k < power; ++k) {
    Vector next = v + m.matrix() * v;
    const Complex tr = unvec(next, m.dim()).trace();
    if (std::abs(tr) == 0.0) return 0.0;
    v = next / tr.real();
  }
  const RealVector ev = hermitian_eigenvalues(unvec(v, m.dim()));
  return ev.maxCoeff() > 0.0 ? ev.minCoeff() / ev.maxCoeff() : -1.0;
}

/// Applies (iota + M)^{D^2 - 1} to random pure states. A non-positive output refutes
/// irreducibility; all-positive outputs corroborate it.
inline PositivityImprovingReport crosscheck_positivity_improving(const SuperOperator& m, std::size_t trials,
                                                                 std::uint64_t seed, const Tolerances& tol = {}) {
  PositivityImprovingReport rep;
  rep.trials = trials;
  rep.power = m.dim() * m.dim() - 1;
  rep.min_relative_eigenvalue = 1.0;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const double margin = positivity_improving_margin(m, random_pure_state(m.dim(), rng).matrix());
    rep.min_relative_eigenvalue = std::min(rep.min_relative_eigenvalue, margin);
  }
  rep.refuted = rep.min_relative_eigenvalue <= tol.positivity;
  return rep;
}

/// (lambda_theta, rho_theta, A_theta) with Tr rho_theta = 1 and min-eig(A_theta) = 1.
struct PerronFrobeniusData {
  double theta = 0.0;
  double log_lambda = 0.0;
  double lambda = 1.0;
  Matrix rho;
  Matrix a_op;
  /// Largest eigenvalue of A_theta.
  double a_norm = 1.0;
  /// |second eigenvalue| / lambda, a conditioning diagnostic.
  double second_modulus_ratio = 0.0;
};

/// Perron-Frobenius eigendata of Lambda_theta. Internally works with
/// e^{-theta c} Lambda_theta (c = max or min value) so that large tilts do not overflow.
inline PerronFrobeniusData pf_eigendata(const Instrument& instr, double theta, const Tolerances& tol = {}) {
  instr.require_valid();
  const std::size_t d = instr.dim();
  const double shift = theta > 0.0 ? instr.max_value() : (theta < 0.0 ? instr.min_value() : 0.0);
  const Matrix s = weighted_sum_matrix(instr, [&](double x) { return std::exp(theta * (x - shift)); });

  Eigen::ComplexEigenSolver<Matrix> es(s, false);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "complex eigensolver did not converge");
  const Vector& ev = es.eigenvalues();
  Eigen::Index top = 0;
  ev.real().maxCoeff(&top);
  const double lam = ev(top).real();
  if (!(lam > 0.0)) fail(ErrorKind::precondition_violated, "not irreducible: spectral radius is zero");
  double second = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (i != top) second = std::max(second, std::abs(ev(i)));

  const auto n = s.rows();
  const Matrix shifted = s - Complex(lam) * Matrix::Identity(n, n);
  const auto right = detail::null_space(shifted, tol.eigenvalue * lam);
  if (right.nullity > 1)
    fail(ErrorKind::precondition_violated,
         "degenerate peripheral eigenvalue (geometric multiplicity " + std::to_string(right.nullity) + ")");

  PerronFrobeniusData pf;
  pf.theta = theta;
  pf.second_modulus_ratio = second / lam;

  Matrix rho = detail::hermitian_eigenvector(right.vector, d);
  rho /= rho.trace().real();
  const auto rm = detail::positivity_margin(rho, tol);
  // Positive reweighting preserves irreducibility, so a margin lost to a large
  // tilt is resolved on the untilted map.
  bool base_checked = false;
  const auto require_positive = [&](const PositivityMargin& pm, const char* which) {
    if (pm.positive == Verdict::yes) return;
    if (pm.positive == Verdict::indeterminate && theta != 0.0) {
      if (!base_checked) base_checked = analyze_spectrum(total_map(instr), tol).verdict == Verdict::yes;
      if (base_checked) return;
    }
    fail(ErrorKind::precondition_violated, std::string("not irreducible: ") + which +
                                               " Perron-Frobenius eigenvector has relative margin " +
                                               std::to_string(pm.relative));
  };
  require_positive(rm, "right");
  pf.rho = rho;

  const auto di = static_cast<Eigen::Index>(d);
  if (theta == 0.0) {
    // Trace preservation: Lambda^*(I) = I and r(Lambda) = 1.
    pf.log_lambda = 0.0;
    pf.lambda = 1.0;
    pf.a_op = Matrix::Identity(di, di);
    pf.a_norm = 1.0;
    return pf;
  }

  const auto left = detail::null_space(shifted.adjoint(), tol.eigenvalue * lam);
  Matrix a = detail::hermitian_eigenvector(left.vector, d);
  const auto am = detail::positivity_margin(a, tol);
  require_positive(am, "left");
  if (!(am.min_eigenvalue > 0.0) || !std::isfinite(am.max_eigenvalue / am.min_eigenvalue))
    fail(ErrorKind::numerical, "A_theta is numerically singular at theta = " + std::to_string(theta));
  a /= am.min_eigenvalue;
  pf.a_op = hermitian_part(a);
  pf.a_norm = am.max_eigenvalue / am.min_eigenvalue;
  pf.log_lambda = std::log(lam) + theta * shift;
  pf.lambda = std::exp(pf.log_lambda);
  return pf;
}

}  // namespace qhmm
