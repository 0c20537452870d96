#pragma once

// Canonical instruments used by the tests, the acceptance suite and the CLI.

#include <cmath>
#include <string>
#include <vector>

#include "qhmm/instrument.hpp"

namespace qhmm::fixtures {

/// d = 1, outcome values (0, 1) with probabilities (1 - p, p).
inline Instrument iid_coin(double p = 0.5) {
  std::vector<Outcome> os;
  os.push_back({"0", 0.0, {Matrix::Constant(1, 1, std::sqrt(1.0 - p))}});
  os.push_back({"1", 1.0, {Matrix::Constant(1, 1, std::sqrt(p))}});
  return Instrument(1, std::move(os));
}

/// Cyclic shift |i-1> -> |i>, outcome i with value i. Irreducible, period d.
inline Instrument shift(std::size_t d = 3) {
  const auto n = static_cast<Eigen::Index>(d);
  std::vector<Outcome> os;
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix k = Matrix::Zero(n, n);
    k(i, (i + n - 1) % n) = 1.0;
    os.push_back({std::to_string(i), static_cast<double>(i), {k}});
  }
  return Instrument(d, std::move(os));
}

/// Classical chain with column-stochastic T (T(j, i) = Pr{i -> j}) embedded as
/// Kraus operators sqrt(T(j, i)) |j><i|; outcome "i->j" carries value j.
inline Instrument classical_chain(const Eigen::MatrixXd& t) {
  const auto n = t.rows();
  std::vector<Outcome> os;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      Matrix k = Matrix::Zero(n, n);
      k(j, i) = std::sqrt(t(j, i));
      os.push_back({std::to_string(i) + "->" + std::to_string(j), static_cast<double>(j), {k}});
    }
  return Instrument(static_cast<std::size_t>(n), std::move(os));
}

inline Eigen::MatrixXd default_chain_matrix() {
  Eigen::MatrixXd t(2, 2);
  t << 0.9, 0.2, 0.1, 0.8;
  return t;
}

inline Instrument classical_chain() { return classical_chain(default_chain_matrix()); }

/// C_0 = q U_0 . U_0^dagger with U_0 = exp(-i alpha sigma_x), value +1;
/// C_1 = (1 - q) U_1 . U_1^dagger with U_1 = exp(-i beta sigma_y), value -1.
inline Instrument qubit_unitary_mixture(double q = 0.3, double alpha = 0.4, double beta = 0.7) {
  const Complex i(0.0, 1.0);
  Matrix u0(2, 2), u1(2, 2);
  u0 << std::cos(alpha), -i * std::sin(alpha), -i * std::sin(alpha), std::cos(alpha);
  u1 << std::cos(beta), -std::sin(beta), std::sin(beta), std::cos(beta);
  std::vector<Outcome> os;
  os.push_back({"plus", 1.0, {std::sqrt(q) * u0}});
  os.push_back({"minus", -1.0, {std::sqrt(1.0 - q) * u1}});
  return Instrument(2, std::move(os));
}

/// Photon counting on a driven qubit: a jump |1> -> |0> (value 1) or no jump
/// (value 0), each followed by the rotation exp(-i beta sigma_y).
inline Instrument qubit_photon_counting(double gamma = 0.4, double beta = 0.6) {
  Matrix r(2, 2);
  r << std::cos(beta), -std::sin(beta), std::sin(beta), std::cos(beta);
  Matrix k0 = Matrix::Zero(2, 2);
  k0(0, 0) = 1.0;
  k0(1, 1) = std::sqrt(1.0 - gamma);
  Matrix k1 = Matrix::Zero(2, 2);
  k1(0, 1) = std::sqrt(gamma);
  std::vector<Outcome> os;
  os.push_back({"dark", 0.0, {r * k0}});
  os.push_back({"click", 1.0, {r * k1}});
  return Instrument(2, std::move(os));
}

/// Two qubit sectors that never exchange population. Reducible.
inline Instrument block_diagonal() {
  Matrix x = Matrix::Zero(4, 4);
  Matrix z = Matrix::Zero(4, 4);
  Matrix px(2, 2), pz(2, 2);
  px << 0, 1, 1, 0;
  pz << 1, 0, 0, -1;
  x.block(0, 0, 2, 2) = px;
  x.block(2, 2, 2, 2) = px;
  z.block(0, 0, 2, 2) = pz;
  z.block(2, 2, 2, 2) = pz;
  std::vector<Outcome> os;
  os.push_back({"flip", 0.0, {std::sqrt(0.5) * x}});
  os.push_back({"phase", 1.0, {std::sqrt(0.5) * z}});
  return Instrument(4, std::move(os));
}

struct NamedFixture {
  std::string name;
  Instrument instrument;
  bool irreducible;
  bool primitive;
};

/// Bundled fixtures with their known classification.
inline std::vector<NamedFixture> all() {
  return {
      {"iid-coin", iid_coin(), true, true},
      {"shift-d3", shift(3), true, false},
      {"classical-chain", classical_chain(), true, true},
      {"qubit-unitary-mixture", qubit_unitary_mixture(), true, true},
      {"qubit-photon-counting", qubit_photon_counting(), true, true},
      {"block-diagonal", block_diagonal(), false, false},
  };
}

inline Instrument by_name(const std::string& name) {
  for (auto& f : all())
    if (f.name == name) return f.instrument;
  fail(ErrorKind::invalid_input, "unknown fixture '" + name + "'");
}

}  // namespace qhmm::fixtures
