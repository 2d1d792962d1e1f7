#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mdid/monte_carlo.hpp"
#include "mdid/theory.hpp"
#include "support.hpp"

using namespace mdid;
using mdid::testing::canonical;
using mdid::testing::random_canonical;
using mdid::testing::random_dgp;

namespace {

constexpr auto kDid = EstimatorKind::classic_did;
constexpr auto kX = EstimatorKind::matched_x;
constexpr auto kXY = EstimatorKind::matched_x_y;

/// Single-factor parameter set with constant latent coefficient `beta`,
/// unit latent variance and no covariate correlation.
DgpParams single_factor(Index T, double beta, double sigma_e2) {
  DgpParams d;
  d.n_units = 100;
  d.p_treated = 0.5;
  d.t_pre = T;
  d.beta0 = Vector::Zero(T + 1);
  d.beta_theta = Matrix::Constant(T + 1, 1, beta);
  d.beta_x = Matrix::Ones(T + 1, 1);
  d.mu_theta0 = d.mu_theta1 = Vector::Zero(1);
  d.mu_x0 = d.mu_x1 = Vector::Zero(1);
  d.sigma_theta_theta = Matrix::Identity(1, 1);
  d.sigma_xx = Matrix::Identity(1, 1);
  d.sigma_theta_x = Matrix::Zero(1, 1);
  d.sigma_e2 = sigma_e2;
  return d;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(VarianceCanonical, ParallelTrendsOnlyNoise) {
  const auto v = variance_canonical(canonical(0.0, 0.0, 0.0), 100, 100);
  EXPECT_NEAR(v.v_did, 0.04, 1e-15);
  EXPECT_NEAR(v.v_didx, 0.04, 1e-15);
}

TEST(VarianceCanonical, TimeVaryingCoefficients) {
  const auto v = variance_canonical(canonical(0.5, 0.3, 0.0), 100, 100);
  EXPECT_NEAR(v.v_did, 0.0468, 1e-15);
  EXPECT_NEAR(v.v_didx, 0.0450, 1e-15);
}

TEST(VarianceCanonical, ReliabilityShrinksMatchedOutcomeVariance) {
  const auto v = variance_canonical(canonical(0.0, 0.0, 0.0), 100, 100);
  EXPECT_NEAR(v.reliability, 0.5, 1e-15);
  EXPECT_NEAR(v.v_didxy, 0.03, 1e-15);
  EXPECT_LE(v.v_didxy, v.v_didx);
}

TEST(VarianceCanonical, PerfectCorrelationRejected) {
  try {
    variance_canonical(canonical(0.5, 0.3, 1.0), 100, 100);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "degenerate correlation");
  }
}

TEST(VarianceGeneralized, ReducesToCanonical) {
  rng::Stream s(1, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_canonical(s);
    const Index n1 = 10 + static_cast<Index>(s.below(300));
    const Index n0 = n1 + static_cast<Index>(s.below(300));
    const auto v = variance_canonical(c, n1, n0);
    const auto m = variance_generalized(c.to_dgp(n1 + n0, 0.5), n1, n0);
    EXPECT_LT(rel_err(m[kDid].var_full, v.v_did), 1e-12);
    EXPECT_LT(rel_err(m[kX].var_full, v.v_didx), 1e-12);
    EXPECT_LT(rel_err(m[kXY].var_full, v.v_didxy), 1e-12);
    ASSERT_TRUE(m.reliability_scalar.has_value());
    EXPECT_LT(rel_err(*m.reliability_scalar, v.reliability), 1e-12);
  }
}

TEST(VarianceGeneralized, NoCovariateChannel) {
  auto d = canonical(0.5, 0.0, 0.0).to_dgp(200, 0.5);
  const auto m = variance_generalized(d, 100, 100);
  EXPECT_EQ(m[kDid].var_core - m[kX].var_core, 0.0);
}

TEST(VarianceGeneralized, SingularCovariatesReportCondition) {
  rng::Stream s(2, rng::StreamTag::test, 0);
  auto d = random_dgp(s, 1, 2, 2);
  // Passes the factorization test but trips the condition-number guard.
  d.sigma_xx = Matrix{{1.0, 1.0 - 1e-15}, {1.0 - 1e-15, 1.0}};
  d.sigma_theta_x = Matrix::Zero(1, 2);
  try {
    variance_generalized(d, 100, 100);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("condition number"), std::string::npos);
  }
}

TEST(VarianceGeneralized, MonteCarloAgreementMultiFactor) {
  rng::Stream s(3, rng::StreamTag::test, 0);
  const auto d = random_dgp(s, 2, 2, 3);
  const auto m = variance_generalized(d, 500, 500);
  const auto mc = run_monte_carlo(d, 10000, 500, 500, 77, 1);
  for (const auto k : kAllEstimators)
    EXPECT_LT(rel_err(mc[k].variance, m[k].var_full), 0.05) << to_string(k);
}

TEST(BiasGeneralized, NoImbalanceNoBias) {
  rng::Stream s(4, rng::StreamTag::test, 0);
  auto d = random_dgp(s, 2, 1, 3);
  d.mu_theta1 = d.mu_theta0;
  d.mu_x1 = d.mu_x0;
  for (double b : bias_generalized(d)) EXPECT_EQ(b, 0.0);
}

TEST(BiasGeneralized, HandExample) {
  auto c = canonical(0.5, 0.3, 0.0, 1.0, 0.5);
  const auto b = bias_generalized(c.to_dgp(200, 0.5));
  EXPECT_NEAR(b[0], 0.65, 1e-15);
  EXPECT_NEAR(b[1], 0.5, 1e-15);
}

TEST(BiasGeneralized, MatchedOutcomeHandExample) {
  // beta_theta = 1 throughout, unit variances: r = 0.5, delta~ = 1.
  auto c = canonical(0.0, 0.0, 0.0, 1.0, 0.0);
  const auto d = c.to_dgp(200, 0.5);
  EXPECT_NEAR(bias_generalized(d)[2], 0.5, 1e-15);
  const auto m = mse_generalized(d, 100, 100);
  EXPECT_NEAR(m[kXY].var_full, 0.03, 1e-15);
  EXPECT_NEAR(m[kXY].mse, 0.28, 1e-15);
}

TEST(BiasGeneralized, ClassicBiasIsTrendViolation) {
  rng::Stream s(5, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_dgp(s, 1 + static_cast<Index>(s.below(3)), 1 + static_cast<Index>(s.below(3)),
                              1 + static_cast<Index>(s.below(4)));
    const auto st = derive_structure(d);
    const double violation = st.delta_theta.dot(st.delta_theta_groups) + st.delta_x_coeff.dot(st.delta_x_groups);
    EXPECT_NEAR(bias_generalized(d)[0], violation, 1e-12);
  }
}

TEST(BiasGeneralized, MonteCarloAgreement) {
  auto c = canonical(0.5, 0.3, 0.0, 1.0, 0.5, 1.0, 0.7);
  const auto d = c.to_dgp(2000, 0.5);
  const auto b = bias_generalized(d);
  const auto mc = run_monte_carlo(d, 4000, 500, 1000, 5, 1);
  for (const auto k : kAllEstimators)
    EXPECT_LT(std::abs(mc[k].bias - b[index_of(k)]), 3.0 * mc[k].mc_se_mean) << to_string(k);
}

TEST(MseGeneralized, ZeroBiasGivesVariance) {
  auto d = canonical(0.5, 0.3, 0.2).to_dgp(200, 0.5);
  const auto m = mse_generalized(d, 100, 100);
  for (const auto k : kAllEstimators) EXPECT_EQ(m[k].mse, m[k].var_full);
}

TEST(MseGeneralized, MonteCarloMeanSquaredDeviation) {
  rng::Stream s(6, rng::StreamTag::test, 0);
  const auto d = random_dgp(s, 1, 2, 2);
  const auto m = mse_generalized(d, 300, 400);
  const auto mc = run_monte_carlo(d, 10000, 300, 400, 6, 1);
  for (const auto k : kAllEstimators) EXPECT_LT(rel_err(mc[k].mse, m[k].mse), 0.05) << to_string(k);
}

TEST(MomentsGeneralized, CaliperCountFlagged) {
  const auto d = canonical(0.5, 0.3, 0.0).to_dgp(200, 0.5);
  const auto m = moments_generalized(d, 100, 100, Index{80});
  EXPECT_TRUE(m.outside_model_assumptions);
  EXPECT_NEAR(m[kX].factor, 1.0 / 100 + 1.0 / 80, 1e-15);
}

TEST(ReliabilityScalar, HandValues) {
  EXPECT_NEAR(reliability_scalar(single_factor(2, 1.0, 1.0)), 2.0 / 3.0, 1e-15);
  EXPECT_LT(reliability_scalar(single_factor(2, 1.0, 1e9)), 1e-8);
  const auto c = canonical(0.4, 0.1, 0.0);
  EXPECT_NEAR(reliability_scalar(c.to_dgp(100, 0.5)), variance_canonical(c, 50, 50).reliability, 1e-15);
}

TEST(ReliabilityScalar, MultiFactorRejected) {
  rng::Stream s(7, rng::StreamTag::test, 0);
  EXPECT_THROW(reliability_scalar(random_dgp(s, 2, 1, 2)), ValidationError);
}

TEST(ReliabilityScalar, MatrixFormAgreesForSingleFactor) {
  rng::Stream s(8, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_dgp(s, 1, 1 + static_cast<Index>(s.below(3)), 1 + static_cast<Index>(s.below(6)));
    const auto st = derive_structure(d);
    const double r = reliability_scalar(d);
    const double bT = st.beta_theta_post(0), sig = st.sigma_tilde(0, 0);
    const double via_matrix = st.beta_theta_post.dot((Matrix::Identity(1, 1) - st.r_matrix) * st.sigma_tilde *
                                                     st.beta_theta_post);
    EXPECT_NEAR(via_matrix, bT * bT * (1.0 - r) * sig, 1e-12);
    EXPECT_NEAR(st.r_matrix(0, 0), r, 1e-12);
  }
}

TEST(ReliabilityMatrix, WoodburyPathAgrees) {
  rng::Stream s(9, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const Index q = 1 + static_cast<Index>(s.below(3));
    const auto d = random_dgp(s, q, 1 + static_cast<Index>(s.below(2)), 1 + static_cast<Index>(s.below(5)));
    const auto st = derive_structure(d);
    const Matrix btb = st.b_theta.transpose() * st.b_theta;
    const Matrix r_alt = (d.sigma_e2 * st.sigma_tilde.inverse() + btb).inverse() * btb;
    EXPECT_LT((r_alt - st.r_matrix).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ReliabilityMatrix, SymmetrizedEigenvaluesInUnitInterval) {
  rng::Stream s(10, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const Index q = 1 + static_cast<Index>(s.below(3));
    const auto d = random_dgp(s, q, 1 + static_cast<Index>(s.below(2)), 1 + static_cast<Index>(s.below(5)));
    const auto st = derive_structure(d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(st.sigma_tilde);
    const Matrix half = es.operatorSqrt();
    const Matrix pre = st.b_theta * st.sigma_tilde * st.b_theta.transpose() + st.sigma_eps;
    const Matrix sym = half * st.b_theta.transpose() * pre.inverse() * st.b_theta * half;
    Eigen::SelfAdjointEigenSolver<Matrix> ev(0.5 * (sym + sym.transpose()));
    EXPECT_GE(ev.eigenvalues().minCoeff(), -1e-12);
    EXPECT_LT(ev.eigenvalues().maxCoeff(), 1.0);
  }
}

TEST(ReliabilityConvergence, ClosedFormDistance) {
  const auto trace = reliability_convergence_check([](Index T) { return single_factor(T, 1.0, 1.0); },
                                                   {1, 9, 99});
  ASSERT_EQ(trace.points.size(), 3u);
  EXPECT_NEAR(trace.points[0].distance, 0.5, 1e-12);
  EXPECT_NEAR(trace.points[1].distance, 0.1, 1e-12);
  EXPECT_NEAR(trace.points[2].distance, 0.01, 1e-12);
  EXPECT_FALSE(trace.assumption_violated);
}

TEST(ReliabilityConvergence, DecreasingInT) {
  rng::Stream s(11, rng::StreamTag::test, 0);
  const auto base = random_dgp(s, 2, 1, 1);
  auto family = [&](Index T) {
    DgpParams d = base;
    d.t_pre = T;
    d.beta0 = Vector::Zero(T + 1);
    d.beta_x = Matrix::Ones(T + 1, 1);
    d.beta_theta = Matrix(T + 1, 2);
    for (Index t = 0; t <= T; ++t) d.beta_theta.row(t) << 1.0 + 0.5 * std::sin(0.7 * t), 0.5 + 0.3 * std::cos(1.3 * t);
    return d;
  };
  const auto trace = reliability_convergence_check(family, {10, 100, 1000});
  EXPECT_TRUE(trace.strictly_decreasing);
  EXPECT_FALSE(trace.assumption_violated);
}

TEST(ReliabilityConvergence, ZeroSignalFlagged) {
  const auto trace = reliability_convergence_check([](Index T) { return single_factor(T, 0.0, 1.0); }, {5, 50});
  EXPECT_TRUE(trace.assumption_violated);
  for (const auto& pt : trace.points) EXPECT_EQ(pt.distance, 1.0);
}

TEST(ReliabilityConvergence, SingularityIsReportedNotFatal) {
  // Noise-free with more pre-periods than latent dimensions: the pre-period
  // covariance is singular.
  const auto trace = reliability_convergence_check([](Index T) { return single_factor(T, 1.0, 0.0); }, {1, 3});
  ASSERT_EQ(trace.points.size(), 2u);
  EXPECT_TRUE(trace.points[0].error.empty());
  EXPECT_FALSE(trace.points[1].error.empty());
}

TEST(Tradeoff, EqualSamplesFavourCovariateMatching) {
  const auto r = variance_tradeoff_conditions(canonical(0.5, 0.3, 0.0), 100, 100);
  EXPECT_TRUE(r.match_x_better);
  EXPECT_EQ(r.rhs, 0.0);
}

TEST(Tradeoff, LargeControlPoolFavoursClassic) {
  const auto r = variance_tradeoff_conditions(canonical(0.5, 0.05, 0.0), 100, 10000);
  EXPECT_FALSE(r.match_x_better);
}

TEST(Tradeoff, AgreesWithVarianceComparison) {
  rng::Stream s(12, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = random_canonical(s);
    const Index n1 = 5 + static_cast<Index>(s.below(500));
    const Index n0 = n1 + static_cast<Index>(s.below(5000));
    const auto v = variance_canonical(c, n1, n0);
    EXPECT_EQ(variance_tradeoff_conditions(c, n1, n0).match_x_better, v.v_did >= v.v_didx);
  }
}

TEST(Ordering, MatchingOnOutcomesNeverIncreasesVariance) {
  rng::Stream s(13, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto c = random_canonical(s);
    const Index n1 = 5 + static_cast<Index>(s.below(500));
    const auto v = variance_canonical(c, n1, n1 + static_cast<Index>(s.below(500)));
    ASSERT_GE(v.v_didx, v.v_didxy);
  }
}

TEST(Ordering, ParallelTrendsFavourClassic) {
  rng::Stream s(14, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 200; ++trial) {
    auto c = random_canonical(s);
    c.beta_theta[1] = c.beta_theta[0];
    c.beta_x[1] = c.beta_x[0];
    const Index n1 = 5 + static_cast<Index>(s.below(500));
    const auto v = variance_canonical(c, n1, n1 + static_cast<Index>(s.below(500)));
    EXPECT_LE(v.v_did, v.v_didx);
    c.rho = 0.0;
    EXPECT_EQ(bias_generalized(c.to_dgp(100, 0.5))[0], 0.0);
  }
}

TEST(Invariance, LatentRotation) {
  rng::Stream s(15, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const Index q = 2 + static_cast<Index>(s.below(2));
    const auto d = random_dgp(s, q, 1 + static_cast<Index>(s.below(2)), 1 + static_cast<Index>(s.below(4)));
    Matrix a(q, q);
    for (Index i = 0; i < q; ++i)
      for (Index j = 0; j < q; ++j) a(i, j) = s.normal();
    const Matrix rot = Eigen::HouseholderQR<Matrix>(a).householderQ();
    DgpParams r = d;
    r.beta_theta = d.beta_theta * rot.transpose();
    r.mu_theta0 = rot * d.mu_theta0;
    r.mu_theta1 = rot * d.mu_theta1;
    r.sigma_theta_theta = rot * d.sigma_theta_theta * rot.transpose();
    r.sigma_theta_x = rot * d.sigma_theta_x;
    const auto m0 = mse_generalized(d, 200, 300);
    const auto m1 = mse_generalized(r, 200, 300);
    for (const auto k : kAllEstimators) {
      EXPECT_NEAR(m0[k].bias, m1[k].bias, 1e-10);
      EXPECT_NEAR(m0[k].var_core, m1[k].var_core, 1e-10);
    }
  }
}
