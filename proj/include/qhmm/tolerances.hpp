#pragma once

namespace qhmm {

/// Numerical tolerances shared by every classification and validation routine.
///
/// All routines take a `Tolerances` argument defaulting to these values so that
/// a verdict computed in one module is reproducible in another.
struct Tolerances {
  /// Max-entry deviation from Hermiticity, relative to max(1, max-entry).
  double hermiticity = 1e-10;
  /// Smallest eigenvalue allowed for a positive semi-definite operator.
  double psd = 1e-10;
  /// Frobenius residual of sum K^dagger K - I.
  double trace_preservation = 1e-10;
  /// Relative clustering radius for eigenvalues (|mu - r| <= eigenvalue * r).
  double eigenvalue = 1e-8;
  /// An eigenvector is strictly positive when min-eig > positivity * max-eig.
  double positivity = 1e-8;
};

}  // namespace qhmm
