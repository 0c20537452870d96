#pragma once

// Dense complex matrices and linear maps on them.
//
// Vectorization is column stacking throughout: vec(X)[i + d*j] = X(i, j), so
// that vec(A X B) = (B^T (x) A) vec(X). A Kraus operator K therefore acts by the
// matrix conj(K) (x) K, and the Hilbert-Schmidt adjoint of a superoperator is
// the conjugate transpose of its matrix.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "qhmm/error.hpp"
#include "qhmm/tolerances.hpp"

namespace qhmm {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline std::string dims_string(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

/// Column-stacking vectorization.
inline Vector vec(const Matrix& x) { return Eigen::Map<const Vector>(x.data(), x.size()); }

/// Inverse of vec() for a d x d matrix.
inline Matrix unvec(const Vector& v, std::size_t d) {
  if (static_cast<std::size_t>(v.size()) != d * d)
    fail(ErrorKind::invalid_input, "unvec: length " + std::to_string(v.size()) + " is not " +
                                       std::to_string(d) + "^2");
  const auto n = static_cast<Eigen::Index>(d);
  return Eigen::Map<const Matrix>(v.data(), n, n);
}

inline Matrix kron(const Matrix& a, const Matrix& b) { return Eigen::kroneckerProduct(a, b).eval(); }

inline double hermiticity_defect(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

/// Eigenvalues (ascending) of the Hermitian part of `m`.
inline RealVector hermitian_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "Hermitian eigensolver failed");
  return es.eigenvalues();
}

class HermitianOperator {
 public:
  explicit HermitianOperator(Matrix m, const Tolerances& tol = {}) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0)
      fail(ErrorKind::invalid_input, "Hermitian operator must be square and non-empty, got " +
                                         dims_string(m_.rows(), m_.cols()));
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    if (hermiticity_defect(m_) > tol.hermiticity * scale)
      fail(ErrorKind::invalid_input, "operator is not Hermitian (defect " +
                                         std::to_string(hermiticity_defect(m_)) + ")");
    m_ = hermitian_part(m_);
  }

  /// Takes the Hermitian part of `m` without checking.
  static HermitianOperator from_hermitian_part(const Matrix& m) {
    HermitianOperator h;
    h.m_ = hermitian_part(m);
    return h;
  }

  static HermitianOperator identity(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    return from_hermitian_part(Matrix::Identity(n, n));
  }

  const Matrix& matrix() const noexcept { return m_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  RealVector eigenvalues() const { return hermitian_eigenvalues(m_); }
  double trace() const { return m_.trace().real(); }
  /// Largest eigenvalue modulus.
  double norm() const { return eigenvalues().cwiseAbs().maxCoeff(); }

 private:
  HermitianOperator() = default;
  Matrix m_;
};

/// A positive semi-definite operator of unit trace.
class DensityOperator {
 public:
  explicit DensityOperator(Matrix m, const Tolerances& tol = {}) : h_(std::move(m), tol) {
    const RealVector ev = h_.eigenvalues();
    if (ev.minCoeff() < -tol.psd)
      fail(ErrorKind::invalid_input,
           "state is not positive semi-definite (min eigenvalue " + std::to_string(ev.minCoeff()) + ")");
    if (std::abs(h_.trace() - 1.0) > tol.psd)
      fail(ErrorKind::invalid_input, "state trace " + std::to_string(h_.trace()) + " is not 1");
  }

  static DensityOperator maximally_mixed(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    return DensityOperator(Matrix::Identity(n, n) / static_cast<double>(d));
  }

  /// |psi><psi| / <psi|psi>.
  static DensityOperator pure(const Vector& psi) {
    const Vector u = psi / psi.norm();
    return DensityOperator(u * u.adjoint());
  }

  /// |k><k| in dimension d.
  static DensityOperator basis(std::size_t d, std::size_t k) {
    Vector e = Vector::Zero(static_cast<Eigen::Index>(d));
    e(static_cast<Eigen::Index>(k)) = 1.0;
    return pure(e);
  }

  const Matrix& matrix() const noexcept { return h_.matrix(); }
  const HermitianOperator& hermitian() const noexcept { return h_; }
  std::size_t dim() const noexcept { return h_.dim(); }

 private:
  HermitianOperator h_;
};

/// A linear map from in_dim x in_dim matrices to out_dim x out_dim matrices,
/// stored as an out_dim^2 x in_dim^2 matrix and optionally backed by Kraus
/// operators (each out_dim x in_dim).
class SuperOperator {
 public:
  SuperOperator(std::size_t in_dim, std::size_t out_dim, Matrix matrix)
      : in_(in_dim), out_(out_dim), m_(std::move(matrix)) {
    if (static_cast<std::size_t>(m_.rows()) != out_ * out_ || static_cast<std::size_t>(m_.cols()) != in_ * in_)
      fail(ErrorKind::invalid_input, "superoperator matrix is " + dims_string(m_.rows(), m_.cols()) +
                                         ", expected " + dims_string(out_ * out_, in_ * in_));
  }

  /// Square map on d x d matrices.
  SuperOperator(std::size_t d, Matrix matrix) : SuperOperator(d, d, std::move(matrix)) {}

  static SuperOperator from_kraus(std::vector<Matrix> kraus) {
    if (kraus.empty()) fail(ErrorKind::invalid_input, "empty Kraus list");
    const auto rows = kraus.front().rows();
    const auto cols = kraus.front().cols();
    if (rows == 0 || cols == 0) fail(ErrorKind::invalid_input, "empty Kraus operator");
    Matrix m = Matrix::Zero(rows * rows, cols * cols);
    for (const auto& k : kraus) {
      if (k.rows() != rows || k.cols() != cols)
        fail(ErrorKind::invalid_input, "Kraus operators have mixed shapes");
      m += kron(k.conjugate(), k);
    }
    SuperOperator s(static_cast<std::size_t>(cols), static_cast<std::size_t>(rows), std::move(m));
    s.kraus_ = std::move(kraus);
    return s;
  }

  static SuperOperator identity(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d * d);
    SuperOperator s(d, Matrix::Identity(n, n));
    const auto k = static_cast<Eigen::Index>(d);
    s.kraus_ = std::vector<Matrix>{Matrix::Identity(k, k)};
    return s;
  }

  static SuperOperator zero(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d * d);
    return SuperOperator(d, Matrix::Zero(n, n));
  }

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }
  std::size_t dim() const noexcept { return in_; }
  bool is_square() const noexcept { return in_ == out_; }
  const Matrix& matrix() const noexcept { return m_; }
  const std::optional<std::vector<Matrix>>& kraus() const noexcept { return kraus_; }

  Matrix apply(const Matrix& x) const {
    check_input(x);
    const Vector y = m_ * vec(x);
    return unvec(y, out_);
  }

  HermitianOperator apply(const HermitianOperator& h) const {
    return HermitianOperator::from_hermitian_part(apply(h.matrix()));
  }

  /// Sum_k K X K^dagger; requires Kraus backing.
  Matrix apply_kraus(const Matrix& x) const {
    if (!kraus_) fail(ErrorKind::invalid_input, "superoperator has no Kraus representation");
    check_input(x);
    const auto n = static_cast<Eigen::Index>(out_);
    Matrix y = Matrix::Zero(n, n);
    for (const auto& k : *kraus_) y.noalias() += k * x * k.adjoint();
    return y;
  }

  friend SuperOperator operator+(const SuperOperator& a, const SuperOperator& b) {
    a.check_same_shape(b);
    return SuperOperator(a.in_, a.out_, a.m_ + b.m_);
  }

  friend SuperOperator operator-(const SuperOperator& a, const SuperOperator& b) {
    a.check_same_shape(b);
    return SuperOperator(a.in_, a.out_, a.m_ - b.m_);
  }

  /// Scaling by c >= 0 keeps the Kraus form (scaled by sqrt(c)).
  friend SuperOperator operator*(double c, const SuperOperator& a) {
    SuperOperator s(a.in_, a.out_, c * a.m_);
    if (a.kraus_ && c >= 0.0) {
      std::vector<Matrix> ks;
      ks.reserve(a.kraus_->size());
      for (const auto& k : *a.kraus_) ks.push_back(std::sqrt(c) * k);
      s.kraus_ = std::move(ks);
    }
    return s;
  }

 private:
  void check_input(const Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != in_ || static_cast<std::size_t>(x.cols()) != in_)
      fail(ErrorKind::invalid_input,
           "input is " + dims_string(x.rows(), x.cols()) + ", map expects " + dims_string(in_, in_));
  }
  void check_same_shape(const SuperOperator& b) const {
    if (in_ != b.in_ || out_ != b.out_) fail(ErrorKind::invalid_input, "superoperator shapes differ");
  }

  std::size_t in_;
  std::size_t out_;
  Matrix m_;
  std::optional<std::vector<Matrix>> kraus_;
};

/// Hilbert-Schmidt adjoint: <adjoint(M)(A), B> = <A, M(B)> with <A, B> = Tr A^dagger B.
inline SuperOperator adjoint(const SuperOperator& m) {
  if (m.kraus()) {
    std::vector<Matrix> ks;
    ks.reserve(m.kraus()->size());
    for (const auto& k : *m.kraus()) ks.push_back(k.adjoint());
    return SuperOperator::from_kraus(std::move(ks));
  }
  return SuperOperator(m.out_dim(), m.in_dim(), m.matrix().adjoint());
}

/// outer o inner.
inline SuperOperator compose(const SuperOperator& outer, const SuperOperator& inner) {
  if (outer.in_dim() != inner.out_dim())
    fail(ErrorKind::invalid_input, "compose: dimension mismatch");
  return SuperOperator(inner.in_dim(), outer.out_dim(), outer.matrix() * inner.matrix());
}

namespace detail {

// Permutation P with vec(A (x) B) = P (vec(A) (x) vec(B)); returns, for each
// position of vec(A) (x) vec(B), the target index in vec(A (x) B).
inline std::vector<Eigen::Index> tensor_vec_permutation(std::size_t d1, std::size_t d2) {
  const std::size_t big = d1 * d2;
  std::vector<Eigen::Index> p(big * big);
  for (std::size_t j1 = 0; j1 < d1; ++j1)
    for (std::size_t i1 = 0; i1 < d1; ++i1)
      for (std::size_t j2 = 0; j2 < d2; ++j2)
        for (std::size_t i2 = 0; i2 < d2; ++i2) {
          const std::size_t src = (i1 + d1 * j1) * d2 * d2 + (i2 + d2 * j2);
          const std::size_t dst = (i1 * d2 + i2) + big * (j1 * d2 + j2);
          p[src] = static_cast<Eigen::Index>(dst);
        }
  return p;
}

}  // namespace detail

/// M1 (x) M2 acting on T(H1 (x) H2); (M1 (x) M2)(A (x) B) = M1(A) (x) M2(B).
inline SuperOperator tensor(const SuperOperator& m1, const SuperOperator& m2) {
  if (m1.kraus() && m2.kraus()) {
    std::vector<Matrix> ks;
    ks.reserve(m1.kraus()->size() * m2.kraus()->size());
    for (const auto& a : *m1.kraus())
      for (const auto& b : *m2.kraus()) ks.push_back(kron(a, b));
    return SuperOperator::from_kraus(std::move(ks));
  }
  const auto pin = detail::tensor_vec_permutation(m1.in_dim(), m2.in_dim());
  const auto pout = detail::tensor_vec_permutation(m1.out_dim(), m2.out_dim());
  const Matrix k = kron(m1.matrix(), m2.matrix());
  Matrix m(k.rows(), k.cols());
  for (Eigen::Index r = 0; r < k.rows(); ++r)
    for (Eigen::Index c = 0; c < k.cols(); ++c) m(pout[static_cast<std::size_t>(r)], pin[static_cast<std::size_t>(c)]) = k(r, c);
  return SuperOperator(m1.in_dim() * m2.in_dim(), m1.out_dim() * m2.out_dim(), std::move(m));
}

/// All eigenvalues of the superoperator matrix (square maps only).
inline Vector superoperator_eigenvalues(const SuperOperator& m) {
  if (!m.is_square()) fail(ErrorKind::invalid_input, "eigenvalues of a non-square map");
  Eigen::ComplexEigenSolver<Matrix> es(m.matrix(), false);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "complex eigensolver did not converge");
  return es.eigenvalues();
}

inline double spectral_radius(const SuperOperator& m) {
  const Vector ev = superoperator_eigenvalues(m);
  const double r = ev.cwiseAbs().maxCoeff();
  if (!std::isfinite(r)) fail(ErrorKind::numerical, "spectral radius is not finite");
  return r;
}

/// Choi matrix J = sum_ij |i><j| (x) M(|i><j|), of size in*out.
inline Matrix choi_matrix(const SuperOperator& m) {
  const auto din = static_cast<Eigen::Index>(m.in_dim());
  const auto dout = static_cast<Eigen::Index>(m.out_dim());
  Matrix j = Matrix::Zero(din * dout, din * dout);
  for (Eigen::Index c = 0; c < din; ++c)
    for (Eigen::Index r = 0; r < din; ++r) {
      const Vector col = m.matrix().col(r + din * c);
      j.block(r * dout, c * dout, dout, dout) = Eigen::Map<const Matrix>(col.data(), dout, dout);
    }
  return j;
}

inline bool is_completely_positive(const SuperOperator& m, const Tolerances& tol = {}) {
  if (m.kraus()) return true;
  const Matrix j = choi_matrix(m);
  if (hermiticity_defect(j) > tol.hermiticity * std::max(1.0, j.cwiseAbs().maxCoeff())) return false;
  return hermitian_eigenvalues(j).minCoeff() >= -tol.psd * std::max(1.0, j.cwiseAbs().maxCoeff());
}

/// Kraus operators recovered from a positive semi-definite Choi matrix.
inline std::vector<Matrix> kraus_from_choi(const SuperOperator& m, const Tolerances& tol = {}) {
  const Matrix j = choi_matrix(m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(j));
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "Choi eigensolver failed");
  const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -tol.psd * top)
    fail(ErrorKind::invalid_input, "map is not completely positive (Choi min eigenvalue " +
                                       std::to_string(es.eigenvalues().minCoeff()) + ")");
  const auto din = static_cast<Eigen::Index>(m.in_dim());
  const auto dout = static_cast<Eigen::Index>(m.out_dim());
  std::vector<Matrix> ks;
  for (Eigen::Index e = 0; e < es.eigenvalues().size(); ++e) {
    const double lam = es.eigenvalues()(e);
    if (lam <= tol.psd * top) continue;
    Matrix k(dout, din);
    for (Eigen::Index i = 0; i < din; ++i)
      for (Eigen::Index r = 0; r < dout; ++r) k(r, i) = std::sqrt(lam) * es.eigenvectors()(i * dout + r, e);
    ks.push_back(std::move(k));
  }
  if (ks.empty()) ks.push_back(Matrix::Zero(dout, din));
  return ks;
}

// ---- random test inputs ----------------------------------------------------

inline Matrix random_ginibre(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = Complex(g(rng), g(rng));
  return m;
}

inline HermitianOperator random_hermitian(std::size_t d, std::mt19937_64& rng) {
  return HermitianOperator::from_hermitian_part(random_ginibre(d, d, rng));
}

inline DensityOperator random_pure_state(std::size_t d, std::mt19937_64& rng) {
  return DensityOperator::pure(random_ginibre(d, 1, rng).col(0));
}

inline DensityOperator random_density(std::size_t d, std::mt19937_64& rng) {
  const Matrix g = random_ginibre(d, d, rng);
  const Matrix p = g * g.adjoint();
  return DensityOperator(p / p.trace().real());
}

/// Haar-ish unitary from the QR decomposition of a Ginibre matrix.
inline Matrix random_unitary(std::size_t d, std::mt19937_64& rng) {
  const Matrix g = random_ginibre(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
}

/// Random CP map with `rank` Kraus operators; trace preserving when `trace_preserving`.
inline SuperOperator random_cp_map(std::size_t d, std::size_t rank, std::mt19937_64& rng,
                                   bool trace_preserving = true) {
  const Matrix stacked = random_ginibre(d * rank, d, rng);
  Matrix v = stacked;
  if (trace_preserving) {
    Eigen::HouseholderQR<Matrix> qr(stacked);
    v = qr.householderQ() * Matrix::Identity(stacked.rows(), stacked.cols());
  }
  std::vector<Matrix> ks;
  const auto n = static_cast<Eigen::Index>(d);
  for (std::size_t k = 0; k < rank; ++k) ks.push_back(v.block(static_cast<Eigen::Index>(k) * n, 0, n, n));
  return SuperOperator::from_kraus(std::move(ks));
}

}  // namespace qhmm
