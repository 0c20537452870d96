#pragma once

// Quantum instruments {C_w} with real outcome values x_w, the maps built from
// them (total, tilted, weighted), and the equivalent finitely correlated state
// presentation Gamma(rho) = sum_w |w><w| (x) C_w(rho) with observable A.

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qhmm/operator_core.hpp"

namespace qhmm {

struct Outcome {
  std::string label;
  double value = 0.0;
  std::vector<Matrix> kraus;
};

struct ValidationCheck {
  std::string name;
  bool passed = true;
  double residual = 0.0;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
  std::string first_failure() const {
    for (const auto& c : checks)
      if (!c.passed) return c.name + ": " + c.message;
    return {};
  }
};

/// Immutable instrument. Construction never throws on bad data; it records a
/// validation report instead, and operations that need a valid instrument
/// reject it through require_valid().
class Instrument {
 public:
  Instrument(std::size_t dim, std::vector<Outcome> outcomes, std::optional<Matrix> initial_state = std::nullopt,
             const Tolerances& tol = {})
      : dim_(dim), outcomes_(std::move(outcomes)), initial_(std::move(initial_state)) {
    build(tol);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return outcomes_.size(); }
  const std::vector<Outcome>& outcomes() const noexcept { return outcomes_; }
  const Outcome& outcome(std::size_t w) const { return outcomes_.at(w); }
  double value(std::size_t w) const { return outcomes_.at(w).value; }
  const ValidationReport& report() const noexcept { return report_; }
  bool valid() const noexcept { return report_.ok(); }

  void require_valid() const {
    if (!valid()) fail(ErrorKind::invalid_input, "invalid instrument: " + report_.first_failure());
  }

  /// Superoperator of C_w (valid instruments only).
  const SuperOperator& map(std::size_t w) const {
    require_valid();
    return maps_.at(w);
  }

  /// Sum_k K^dagger K for outcome w; Tr C_w(rho) = Tr(effect(w) rho).
  const Matrix& effect(std::size_t w) const {
    require_valid();
    return effects_.at(w);
  }

  const DensityOperator& initial_state() const {
    require_valid();
    return *initial_state_;
  }

  /// Explicit initial state as given in the source data (unset means I/d).
  const std::optional<Matrix>& declared_initial_state() const noexcept { return initial_; }

  double min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes_) m = std::min(m, o.value);
    return m;
  }
  double max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes_) m = std::max(m, o.value);
    return m;
  }
  double max_abs_value() const {
    double m = 0.0;
    for (const auto& o : outcomes_) m = std::max(m, std::abs(o.value));
    return m;
  }

  /// Same Kraus data with every value replaced by f(value).
  template <class F>
  Instrument with_values(F&& f) const {
    std::vector<Outcome> os = outcomes_;
    for (auto& o : os) o.value = f(o.value);
    return Instrument(dim_, std::move(os), initial_);
  }

  Instrument with_initial_state(const Matrix& rho) const { return Instrument(dim_, outcomes_, rho); }

 private:
  void build(const Tolerances& tol);

  std::size_t dim_;
  std::vector<Outcome> outcomes_;
  std::optional<Matrix> initial_;
  ValidationReport report_;
  std::vector<SuperOperator> maps_;
  std::vector<Matrix> effects_;
  std::optional<DensityOperator> initial_state_;
};

inline void Instrument::build(const Tolerances& tol) {
  auto& checks = report_.checks;
  const auto d = static_cast<Eigen::Index>(dim_);

  ValidationCheck dimc{"dimension", dim_ > 0, 0.0, dim_ > 0 ? "" : "dimension must be positive"};
  checks.push_back(dimc);

  ValidationCheck nonempty{"outcomes", !outcomes_.empty(), 0.0, outcomes_.empty() ? "no outcomes" : ""};
  checks.push_back(nonempty);

  ValidationCheck shapes{"kraus_shapes", true, 0.0, ""};
  ValidationCheck finite{"finite_values", true, 0.0, ""};
  for (const auto& o : outcomes_) {
    if (!std::isfinite(o.value)) {
      finite.passed = false;
      finite.message = "outcome '" + o.label + "' has a non-finite value";
    }
    if (o.kraus.empty()) {
      shapes.passed = false;
      shapes.message = "outcome '" + o.label + "' has no Kraus operators";
    }
    for (const auto& k : o.kraus) {
      if (k.rows() != d || k.cols() != d) {
        shapes.passed = false;
        shapes.message = "outcome '" + o.label + "' has a " + dims_string(k.rows(), k.cols()) +
                         " Kraus operator, expected " + dims_string(d, d);
      } else if (!k.allFinite()) {
        shapes.passed = false;
        shapes.message = "outcome '" + o.label + "' has non-finite Kraus entries";
      }
    }
  }
  checks.push_back(shapes);
  checks.push_back(finite);

  ValidationCheck tp{"trace_preserving", false, std::numeric_limits<double>::infinity(), "not evaluated"};
  ValidationCheck init{"initial_state", false, 0.0, "not evaluated"};
  if (dim_ > 0 && shapes.passed && !outcomes_.empty()) {
    Matrix total = Matrix::Zero(d, d);
    for (const auto& o : outcomes_) {
      Matrix e = Matrix::Zero(d, d);
      for (const auto& k : o.kraus) e.noalias() += k.adjoint() * k;
      total += e;
      effects_.push_back(std::move(e));
      maps_.push_back(SuperOperator::from_kraus(o.kraus));
    }
    tp.residual = (total - Matrix::Identity(d, d)).norm();
    tp.passed = tp.residual <= tol.trace_preservation;
    tp.message = tp.passed ? "" : "sum of K^dagger K deviates from I by " + std::to_string(tp.residual);

    try {
      if (initial_) {
        if (initial_->rows() != d || initial_->cols() != d)
          fail(ErrorKind::invalid_input, "initial state is " + dims_string(initial_->rows(), initial_->cols()));
        initial_state_.emplace(*initial_, tol);
      } else {
        initial_state_.emplace(DensityOperator::maximally_mixed(dim_));
      }
      init.passed = true;
      init.message.clear();
    } catch (const Error& e) {
      init.message = e.what();
    }
  }
  checks.push_back(tp);
  checks.push_back(init);
}

inline const ValidationReport& validate(const Instrument& instr) { return instr.report(); }

/// Lambda = sum_w C_w.
inline SuperOperator total_map(const Instrument& instr) {
  instr.require_valid();
  std::vector<Matrix> ks;
  for (const auto& o : instr.outcomes())
    for (const auto& k : o.kraus) ks.push_back(k);
  return SuperOperator::from_kraus(std::move(ks));
}

/// Lambda_theta = sum_w e^{theta x_w} C_w, built by scaling each Kraus operator by e^{theta x_w / 2}.
inline SuperOperator tilted_map(const Instrument& instr, double theta) {
  instr.require_valid();
  if (theta == 0.0) return total_map(instr);
  std::vector<Matrix> ks;
  for (const auto& o : instr.outcomes()) {
    const double e = theta * o.value;
    if (std::abs(e) > 700.0)
      fail(ErrorKind::invalid_input, "tilt overflow: |theta * x| = " + std::to_string(std::abs(e)) + " > 700");
    const double scale = std::exp(0.5 * e);
    for (const auto& k : o.kraus) ks.push_back(scale * k);
  }
  return SuperOperator::from_kraus(std::move(ks));
}

/// C_X = sum_w x_w C_w (no Kraus form: the weights may be negative).
inline SuperOperator weighted_map(const Instrument& instr) {
  instr.require_valid();
  const auto n = static_cast<Eigen::Index>(instr.dim() * instr.dim());
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t w = 0; w < instr.size(); ++w) m += instr.value(w) * instr.map(w).matrix();
  return SuperOperator(instr.dim(), std::move(m));
}

/// sum_w f(x_w) C_w as a plain matrix (helper for tilted and derivative maps).
template <class F>
Matrix weighted_sum_matrix(const Instrument& instr, F&& weight) {
  const auto n = static_cast<Eigen::Index>(instr.dim() * instr.dim());
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t w = 0; w < instr.size(); ++w) {
    const double c = weight(instr.value(w));
    if (c != 0.0) m += c * instr.map(w).matrix();
  }
  return m;
}

// ---- finitely correlated states ---------------------------------------------

/// Gamma: T(H) -> T(C^{d_out}) (x) T(H) with a single-site observable A.
/// Tensor order is output register first, hidden system second.
struct FcsModel {
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  SuperOperator gamma;
  HermitianOperator observable;
  std::optional<Matrix> initial_state;
};

inline ValidationReport validate(const FcsModel& model, const Tolerances& tol = {}) {
  ValidationReport rep;
  ValidationCheck shape{"gamma_shape", true, 0.0, ""};
  if (model.gamma.in_dim() != model.hidden_dim || model.gamma.out_dim() != model.hidden_dim * model.output_dim) {
    shape.passed = false;
    shape.message = "gamma must map " + std::to_string(model.hidden_dim) + "-dim to " +
                    std::to_string(model.hidden_dim * model.output_dim) + "-dim matrices";
  }
  rep.checks.push_back(shape);
  ValidationCheck obs{"observable_shape", model.observable.dim() == model.output_dim, 0.0, ""};
  if (!obs.passed) obs.message = "observable dimension differs from output dimension";
  rep.checks.push_back(obs);
  ValidationCheck cp{"completely_positive", is_completely_positive(model.gamma, tol), 0.0, ""};
  if (!cp.passed) cp.message = "Choi matrix of gamma is not positive semi-definite";
  rep.checks.push_back(cp);
  ValidationCheck tp{"trace_preserving", false, 0.0, ""};
  if (shape.passed) {
    // Tr Gamma(X) = Tr X  <=>  Gamma^*(I) = I.
    const auto big = static_cast<Eigen::Index>(model.gamma.out_dim());
    const Matrix pulled = adjoint(model.gamma).apply(Matrix(Matrix::Identity(big, big)));
    const auto d = static_cast<Eigen::Index>(model.hidden_dim);
    tp.residual = (pulled - Matrix::Identity(d, d)).norm();
    tp.passed = tp.residual <= tol.trace_preservation;
    if (!tp.passed) tp.message = "gamma deviates from trace preservation by " + std::to_string(tp.residual);
  }
  rep.checks.push_back(tp);
  return rep;
}

/// Gamma(rho) = sum_w |w><w| (x) C_w(rho), A = sum_w x_w |w><w|.
inline FcsModel to_fcs(const Instrument& instr) {
  instr.require_valid();
  const std::size_t dout = instr.size();
  const auto d = static_cast<Eigen::Index>(instr.dim());
  std::vector<Matrix> gk;
  for (std::size_t w = 0; w < dout; ++w)
    for (const auto& k : instr.outcome(w).kraus) {
      Matrix g = Matrix::Zero(static_cast<Eigen::Index>(dout) * d, d);
      g.block(static_cast<Eigen::Index>(w) * d, 0, d, d) = k;
      gk.push_back(std::move(g));
    }
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(dout), static_cast<Eigen::Index>(dout));
  for (std::size_t w = 0; w < dout; ++w) a(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w)) = instr.value(w);
  return FcsModel{instr.dim(), dout, SuperOperator::from_kraus(std::move(gk)),
                  HermitianOperator::from_hermitian_part(a), instr.declared_initial_state()};
}

/// Spectral decomposition of a Hermitian matrix with eigenvalues merged when
/// they agree within `merge_tol`. Returns (value, orthonormal eigenvectors as columns).
inline std::vector<std::pair<double, Matrix>> spectral_projections(const HermitianOperator& a,
                                                                   double merge_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix());
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "observable eigensolver failed");
  std::vector<std::pair<double, Matrix>> out;
  const auto n = es.eigenvalues().size();
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && es.eigenvalues()(end) - es.eigenvalues()(start) <= merge_tol * std::max(1.0, std::abs(es.eigenvalues()(start))))
      ++end;
    const double v = es.eigenvalues().segment(start, end - start).mean();
    out.emplace_back(v, es.eigenvectors().middleCols(start, end - start));
    start = end;
  }
  return out;
}

/// C_w(rho) = Tr_out (E_w (x) I) Gamma(rho), one outcome per distinct eigenvalue of A.
inline Instrument from_fcs(const FcsModel& model, const Tolerances& tol = {}) {
  const auto rep = validate(model, tol);
  if (!rep.ok()) fail(ErrorKind::invalid_input, "invalid FCS model: " + rep.first_failure());
  const std::vector<Matrix> gk = model.gamma.kraus() ? *model.gamma.kraus() : kraus_from_choi(model.gamma, tol);
  const auto d = static_cast<Eigen::Index>(model.hidden_dim);
  const auto dout = static_cast<Eigen::Index>(model.output_dim);
  std::vector<Outcome> outs;
  for (const auto& [value, vecs] : spectral_projections(model.observable)) {
    Outcome o;
    o.value = value;
    o.label = "x=" + std::to_string(value);
    for (const auto& g : gk)
      for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
        // (<v_j| (x) I) G.
        Matrix k = Matrix::Zero(d, d);
        for (Eigen::Index a = 0; a < dout; ++a) k += std::conj(vecs(a, j)) * g.block(a * d, 0, d, d);
        o.kraus.push_back(std::move(k));
      }
    outs.push_back(std::move(o));
  }
  return Instrument(model.hidden_dim, std::move(outs), model.initial_state, tol);
}

/// Tr rho_n ({(1/n) sum_i A_i > a} (x) I), with rho_n built explicitly on
/// (C^{d_out})^{(x) n} (x) H. Exponential in n; refuses states of dimension
/// above `max_dim`.
inline double fcs_tail_probability(const FcsModel& model, const Matrix& rho, std::size_t n, double a,
                                   std::size_t max_dim = 2187) {
  const auto rep = validate(model);
  if (!rep.ok()) fail(ErrorKind::invalid_input, "invalid FCS model: " + rep.first_failure());
  if (n == 0) fail(ErrorKind::invalid_input, "n must be positive");
  const auto dh = static_cast<Eigen::Index>(model.hidden_dim);
  const auto dout = static_cast<Eigen::Index>(model.output_dim);
  Eigen::Index prefix = 1;
  for (std::size_t k = 0; k < n; ++k) {
    prefix *= dout;
    if (static_cast<std::size_t>(prefix * dh) > max_dim)
      fail(ErrorKind::precondition_violated, "explicit FCS state exceeds dimension cap");
  }
  const std::vector<Matrix> gk = model.gamma.kraus() ? *model.gamma.kraus() : kraus_from_choi(model.gamma);

  // rho_k as a (P*dh)^2 matrix, P = dout^k; blocks B_pq are dh x dh.
  Matrix state = rho;
  Eigen::Index p = 1;
  for (std::size_t step = 0; step < n; ++step) {
    const Eigen::Index np = p * dout;
    Matrix next = Matrix::Zero(np * dh, np * dh);
    for (const auto& g : gk) {
      for (Eigen::Index pr = 0; pr < p; ++pr)
        for (Eigen::Index pc = 0; pc < p; ++pc) {
          const Matrix gb = g * state.block(pr * dh, pc * dh, dh, dh);  // (dout*dh) x dh
          const Matrix full = gb * g.adjoint();                            // (dout*dh)^2
          for (Eigen::Index al = 0; al < dout; ++al)
            for (Eigen::Index be = 0; be < dout; ++be)
              next.block((pr * dout + al) * dh, (pc * dout + be) * dh, dh, dh) +=
                  full.block(al * dh, be * dh, dh, dh);
        }
    }
    state = std::move(next);
    p = np;
  }

  // Reduce to the output register and rotate into the eigenbasis of A^{(x) n}.
  Matrix reduced = Matrix::Zero(p, p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) reduced(r, c) = state.block(r * dh, c * dh, dh, dh).trace();
  Eigen::SelfAdjointEigenSolver<Matrix> es(model.observable.matrix());
  Matrix w = Matrix::Identity(1, 1);
  for (std::size_t k = 0; k < n; ++k) w = kron(w, es.eigenvectors());
  const Matrix rotated = w.adjoint() * reduced * w;

  const double threshold = static_cast<double>(n) * a;
  double prob = 0.0;
  for (Eigen::Index idx = 0; idx < p; ++idx) {
    double sum = 0.0;
    Eigen::Index rest = idx;
    for (std::size_t k = 0; k < n; ++k) {
      sum += es.eigenvalues()(rest % dout);
      rest /= dout;
    }
    if (sum > threshold) prob += rotated(idx, idx).real();
  }
  return prob;
}

}  // namespace qhmm
