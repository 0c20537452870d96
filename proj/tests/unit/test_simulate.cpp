#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qhmm/asymptotic_variance.hpp"
#include "qhmm/fixtures.hpp"
#include "qhmm/simulate.hpp"
#include "support.hpp"

using namespace qhmm;
using testing_support::max_abs;
using testing_support::plain;

TEST(Sampling, CoinFrequencies) {
  const Instrument coin = fixtures::iid_coin();
  const auto t = sample_trajectory(coin, Matrix::Identity(1, 1), 100000, 42, 0);
  ASSERT_EQ(t.values.size(), 100000u);
  double ones = 0.0;
  for (double v : t.values) ones += v;
  const double sigma = std::sqrt(0.25 / 100000.0);
  EXPECT_LT(std::abs(ones / 100000.0 - 0.5), 3.0 * sigma);
}

TEST(Sampling, ShiftIsDeterministicAndPeriodic) {
  const Instrument shift = fixtures::shift(3);
  const Matrix e0 = DensityOperator::basis(3, 0).matrix();
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto t = sample_trajectory(shift, e0, 30, seed, 0, true);
    for (std::size_t i = 0; i < 30; ++i) {
      EXPECT_EQ(t.values[i], static_cast<double>((i + 1) % 3));
      EXPECT_LT(max_abs(t.states[i] - DensityOperator::basis(3, (i + 1) % 3).matrix()), 1e-14);
    }
  }
}

TEST(Sampling, StatesStayNormalizedAndOutcomesHadPositiveProbability) {
  for (const auto& f : fixtures::all()) {
    const Matrix rho = f.instrument.initial_state().matrix();
    const auto t = sample_trajectory(f.instrument, rho, 200, 7, 3, true);
    ASSERT_FALSE(t.diagnostic) << f.name;
    Matrix prev = rho;
    for (std::size_t i = 0; i < t.outcomes.size(); ++i) {
      double total = 0.0;
      for (std::size_t w = 0; w < f.instrument.size(); ++w) total += (f.instrument.effect(w) * prev).trace().real();
      EXPECT_NEAR(total, 1.0, 1e-10);
      EXPECT_GT((f.instrument.effect(t.outcomes[i]) * prev).trace().real(), 0.0);
      EXPECT_NEAR(t.states[i].trace().real(), 1.0, 1e-10);
      prev = t.states[i];
    }
  }
}

TEST(Sampling, EmpiricalMeanMatchesPhiPrime) {
  for (const char* name : {"iid-coin", "qubit-unitary-mixture", "classical-chain"}) {
    const Instrument instr = fixtures::by_name(name);
    const CgfProfile p(instr);
    const std::size_t n = 2000, trials = 400;
    const auto means = sample_means(instr, p.initial_state(), n, trials, 11);
    double avg = 0.0;
    for (double m : means) avg += m;
    avg /= static_cast<double>(trials);
    // Initial transients contribute O(1/n) to the mean; allow for it on top of the statistical band.
    const double band = 3.0 * std::sqrt(asymptotic_variance(instr) / (double(n) * double(trials)));
    EXPECT_LT(std::abs(avg - p.phi_prime(0.0)), band + 10.0 / double(n)) << name;
  }
}

TEST(Sampling, ReproducibleAcrossRunsAndThreadCounts) {
  const Instrument q = fixtures::qubit_photon_counting();
  const Matrix rho = q.initial_state().matrix();
  const auto a = sample_trajectory(q, rho, 500, 123, 17, true);
  const auto b = sample_trajectory(q, rho, 500, 123, 17, true);
  EXPECT_EQ(a.outcomes, b.outcomes);
  for (std::size_t i = 0; i < a.states.size(); ++i) EXPECT_EQ(a.states[i], b.states[i]);
  const auto c = sample_trajectory(q, rho, 500, 124, 17);
  EXPECT_NE(a.outcomes, c.outcomes);

  setenv("QHMM_THREADS", "1", 1);
  const auto m1 = sample_means(q, rho, 100, 64, 5);
  setenv("QHMM_THREADS", "4", 1);
  const auto m4 = sample_means(q, rho, 100, 64, 5);
  unsetenv("QHMM_THREADS");
  EXPECT_EQ(m1, m4);
  // Trial i of sample_means is the same stream as sample_trajectory(..., i).
  const auto t9 = sample_trajectory(q, rho, 100, 5, 9);
  double s = 0.0;
  for (double v : t9.values) s += v;
  EXPECT_EQ(s / 100.0, m1[9]);
}

TEST(Sampling, VanishingProbabilityIsDiagnosed) {
  // Projective measurement in the computational basis.
  Matrix k = Matrix::Zero(2, 2);
  k(0, 0) = 1.0;
  Matrix k1 = Matrix::Zero(2, 2);
  k1(1, 1) = 1.0;
  const Instrument instr(2, {{"zero", 0.0, {k}}, {"one", 1.0, {k1}}});
  const auto t = sample_trajectory(instr, DensityOperator::basis(2, 1).matrix(), 5, 1, 0);
  EXPECT_FALSE(t.diagnostic);
  const Matrix bad = Matrix::Zero(2, 2);
  TrajectorySampler sampler(instr, bad);
  std::string diag;
  EXPECT_FALSE(sampler.run(3, 1, [](std::size_t, const Vector&) {}, &diag));
  EXPECT_NE(diag.find("vanished"), std::string::npos);
}

TEST(ExactCgf, StationaryTiltedStateGivesLinearCgf) {
  for (const auto& f : fixtures::all()) {
    if (!f.irreducible) continue;
    for (double theta : {-1.0, 0.5, 2.0}) {
      const auto pf = pf_eigendata(f.instrument, theta);
      for (std::size_t n : {1u, 5u, 40u})
        EXPECT_NEAR(exact_cgf(f.instrument, pf.rho, theta, n), static_cast<double>(n) * pf.log_lambda,
                    1e-9 * (1.0 + n * std::abs(pf.log_lambda)))
            << f.name;
    }
  }
}

TEST(ExactCgf, ZeroTiltAndCoinClosedForm) {
  std::mt19937_64 rng(3);
  for (const auto& f : fixtures::all()) {
    const Matrix rho = random_density(f.instrument.dim(), rng).matrix();
    EXPECT_NEAR(exact_cgf(f.instrument, rho, 0.0, 25), 0.0, 1e-12);
  }
  for (double theta : {-3.0, -0.5, 0.7, 10.0})
    EXPECT_NEAR(exact_cgf(fixtures::iid_coin(), Matrix::Identity(1, 1), theta, 50),
                50.0 * std::log((1.0 + std::exp(theta)) / 2.0), 1e-10 * 50.0 * (1.0 + std::abs(theta)));
  // Large tilts: rescaling keeps the value finite.
  EXPECT_NEAR(exact_cgf(fixtures::iid_coin(), Matrix::Identity(1, 1), 800.0, 1000),
              1000.0 * (800.0 + std::log((1.0 + std::exp(-800.0)) / 2.0)), 1e-6);
}

TEST(ExactCgf, MatchesEnumeration) {
  for (const auto& f : fixtures::all()) {
    const Matrix rho = f.instrument.initial_state().matrix();
    const std::size_t n = f.instrument.size() > 2 ? 5 : 8;
    const auto strings = oracle::enumerate(plain(f.instrument), rho, n);
    for (double theta : {-1.0, -0.5, 0.5, 1.0})
      EXPECT_NEAR(exact_cgf(f.instrument, rho, theta, n), oracle::cgf(strings, theta), 1e-10) << f.name;
  }
}

TEST(SumDistribution, CoinSingleStepAndBinomialTail) {
  const Instrument coin = fixtures::iid_coin();
  const auto d1 = exact_sum_distribution(coin, Matrix::Identity(1, 1), 1);
  ASSERT_EQ(d1.size(), 2u);
  EXPECT_EQ(d1.sum_value(0), 0.0);
  EXPECT_EQ(d1.sum_value(1), 1.0);
  EXPECT_NEAR(d1.probability(0), 0.5, 1e-15);
  EXPECT_NEAR(d1.probability(1), 0.5, 1e-15);
  EXPECT_NEAR(exact_tail(coin, Matrix::Identity(1, 1), 10, 0.75, TailDirection::upper), 56.0 / 1024.0, 1e-12);
  EXPECT_NEAR(exact_tail(coin, Matrix::Identity(1, 1), 10, 0.25, TailDirection::lower), 56.0 / 1024.0, 1e-12);
  EXPECT_NEAR(exact_tail(coin, Matrix::Identity(1, 1), 40, 0.7, TailDirection::upper),
              oracle::binomial_upper_tail(40, 0.5, 28), 1e-12);
}

TEST(SumDistribution, NormalizationPositivityAndMarginal) {
  for (const auto& f : fixtures::all()) {
    const Matrix rho = f.instrument.initial_state().matrix();
    const std::size_t n = f.instrument.size() > 2 ? 8 : 14;
    const auto dist = exact_sum_distribution(f.instrument, rho, n);
    EXPECT_NEAR(dist.total_probability(), 1.0, 1e-9) << f.name;
    Matrix marginal = Matrix::Zero(rho.rows(), rho.cols());
    for (std::size_t k = 0; k < dist.size(); ++k) {
      const Matrix atom = dist.atom(k);
      EXPECT_GE(hermitian_eigenvalues(atom).minCoeff(), -1e-12);
      marginal += atom;
    }
    Matrix power = rho;
    const SuperOperator lambda = total_map(f.instrument);
    for (std::size_t i = 0; i < n; ++i) power = lambda.apply(power);
    EXPECT_LT(max_abs(marginal - power), 1e-10) << f.name;
  }
}

TEST(SumDistribution, GeneratingFunctionMatchesExactCgf) {
  for (const auto& f : fixtures::all()) {
    const Matrix rho = f.instrument.initial_state().matrix();
    const std::size_t top = f.instrument.size() > 2 ? 8 : 12;
    for (std::size_t n = 1; n <= top; ++n) {
      const auto dist = exact_sum_distribution(f.instrument, rho, n);
      for (double theta : {-1.0, -0.5, 0.5, 1.0}) {
        double z = 0.0;
        for (std::size_t k = 0; k < dist.size(); ++k) z += std::exp(theta * dist.sum_value(k)) * dist.probability(k);
        EXPECT_NEAR(std::log(z), exact_cgf(f.instrument, rho, theta, n), 1e-8) << f.name << " n=" << n;
      }
    }
  }
}

TEST(SumDistribution, TailsMatchEnumeration) {
  for (const auto& f : fixtures::all()) {
    const Matrix rho = f.instrument.initial_state().matrix();
    const std::size_t n = f.instrument.size() > 2 ? 5 : 9;
    const auto strings = oracle::enumerate(plain(f.instrument), rho, n);
    const auto dist = exact_sum_distribution(f.instrument, rho, n);
    for (double a : {-0.6, 0.0, 0.31, 0.5, 0.77, 1.4}) {
      EXPECT_NEAR(exact_tail(dist, a, TailDirection::upper), oracle::tail(strings, n, a, true), 1e-12) << f.name;
      EXPECT_NEAR(exact_tail(dist, a, TailDirection::lower), oracle::tail(strings, n, a, false), 1e-12) << f.name;
    }
  }
}

TEST(SumDistribution, BelowMinimumIsCertainAndCapIsEnforced) {
  const Instrument q = fixtures::qubit_unitary_mixture();
  EXPECT_NEAR(exact_tail(q, q.initial_state().matrix(), 10, q.min_value() - 0.1, TailDirection::upper), 1.0, 1e-10);
  OracleLimits tight;
  tight.max_storage = 100;
  EXPECT_THROW(exact_sum_distribution(q, q.initial_state().matrix(), 40, tight), Error);
}

TEST(SumDistribution, AgreesWithMonteCarlo) {
  const Instrument q = fixtures::qubit_unitary_mixture();
  const Matrix rho = q.initial_state().matrix();
  const std::size_t n = 12, trials = 200000;
  const double a = 0.2 + 1e-3;
  const double exact = exact_tail(q, rho, n, a, TailDirection::upper);
  const auto means = sample_means(q, rho, n, trials, 2024);
  double hits = 0.0;
  for (double m : means) hits += m >= a ? 1.0 : 0.0;
  const double freq = hits / static_cast<double>(trials);
  EXPECT_LT(std::abs(freq - exact), 4.0 * std::sqrt(exact * (1.0 - exact) / static_cast<double>(trials)));
}

TEST(ScaledCgf, ZeroAndLimits) {
  const CgfProfile coin(fixtures::iid_coin());
  EXPECT_EQ(scaled_cgf_check(coin, 0.0, 500), 0.0);
  EXPECT_LT(std::abs(scaled_cgf_check(coin, 1.0, 10000) - 0.125), 5e-3);
  const CgfProfile q(fixtures::qubit_unitary_mixture());
  EXPECT_LT(std::abs(scaled_cgf_check(q, 1.0, 10000) - 0.5 * asymptotic_variance(q.instrument())), 1e-2);
  // The gap shrinks as n grows.
  EXPECT_LT(std::abs(scaled_cgf_check(coin, 1.0, 10000) - 0.125), std::abs(scaled_cgf_check(coin, 1.0, 100) - 0.125));
}

TEST(Clt, KolmogorovSmirnovSmallForCoin) {
  const CgfProfile coin(fixtures::iid_coin());
  const auto rep = clt_check(coin, 400, 20000, 9);
  EXPECT_LT(rep.ks, 0.04);
  EXPECT_EQ(rep.sample_means.size(), 20000u);
}

TEST(Clt, ZeroVarianceIsRejected) {
  const CgfProfile shift(fixtures::shift(3));
  try {
    clt_check(shift, 100, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zero-variance"), std::string::npos);
  }
}

TEST(KsDistance, ExactValuesOnSmallSamples) {
  // Single point at 0: the empirical CDF jumps from 0 to 1 where Phi = 1/2.
  EXPECT_NEAR(ks_distance_to_gaussian({0.0}, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(ks_distance_to_gaussian({-1.0, 1.0}, 1.0), 0.5 - 0.5 * std::erfc(1.0 / std::sqrt(2.0)), 1e-12);
}
