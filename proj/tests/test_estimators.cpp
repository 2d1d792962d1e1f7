#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mdid/dgp.hpp"
#include "mdid/estimators.hpp"
#include "mdid/matcher.hpp"
#include "mdid/monte_carlo.hpp"
#include "support.hpp"
#include "twfe.hpp"

using namespace mdid;
using mdid::testing::make_panel;

namespace {

// Treated (1,3), (2,5); controls (0,1), (1,2).
PanelData golden() { return make_panel({{1, 3}, {2, 5}, {0, 1}, {1, 2}}, {1, 1, 0, 0}, {{0}, {1}, {0}, {1}}); }

MatchAssignment manual(FeatureSet f, std::vector<std::pair<Index, Index>> pairs, Index n) {
  MatchAssignment a;
  a.features = f;
  for (auto [t, c] : pairs) a.pairs.push_back({t, c, 0.0});
  a.n_treated = static_cast<Index>(pairs.size());
  a.m_flags.assign(static_cast<std::size_t>(n), 0);
  for (auto [t, c] : pairs) a.m_flags[static_cast<std::size_t>(c)] = 1;
  return a;
}

}  // namespace

TEST(Classic, HandExample) {
  const auto r = estimate_classic(golden());
  EXPECT_DOUBLE_EQ(r.tau_hat, 1.5);
  EXPECT_EQ(r.n1, 2);
  EXPECT_EQ(r.n0_or_ntilde, 2);
  EXPECT_EQ(r.basis, PreMeanBasis::single_period);
}

TEST(Classic, ConstantOutcomesGiveZero) {
  const auto p = make_panel({{4, 4}, {4, 4}, {4, 4}, {4, 4}}, {1, 0, 1, 0});
  EXPECT_EQ(estimate_classic(p).tau_hat, 0.0);
}

TEST(Classic, AveragesPrePeriods) {
  const auto p = make_panel({{1, 1, 3}, {0, 0, 0}}, {1, 0});
  const auto r = estimate_classic(p);
  EXPECT_DOUBLE_EQ(r.tau_hat, 2.0);
  EXPECT_EQ(r.basis, PreMeanBasis::averaged_t);
}

TEST(Classic, EmptyGroupIsDegenerate) {
  const auto p = make_panel({{1, 2}, {2, 3}}, {0, 0});
  try {
    estimate_classic(p);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "degenerate group");
  }
}

TEST(MatchedX, AllControlsMatchedEqualsClassic) {
  const auto p = golden();
  const auto a = manual(FeatureSet::covariates_only, {{0, 2}, {1, 3}}, 4);
  EXPECT_DOUBLE_EQ(estimate_matched_x(p, a).tau_hat, estimate_classic(p).tau_hat);
}

TEST(MatchedX, SingleMatchedControl) {
  const auto p = golden();
  const auto only_first = manual(FeatureSet::covariates_only, {{0, 2}}, 4);
  const auto only_second = manual(FeatureSet::covariates_only, {{0, 3}}, 4);
  const auto r1 = estimate_matched_x(p, only_first);
  EXPECT_DOUBLE_EQ(r1.tau_hat, 1.5);
  EXPECT_EQ(r1.n0_or_ntilde, 1);
  EXPECT_FALSE(r1.warnings.empty());
  EXPECT_DOUBLE_EQ(estimate_matched_x(p, only_second).tau_hat, 1.5);
}

TEST(MatchedX, EmptyAssignmentRejected) {
  EXPECT_THROW(estimate_matched_x(golden(), manual(FeatureSet::covariates_only, {}, 4)), ValidationError);
}

TEST(MatchedX, FeatureSetMismatchIsConfigurationError) {
  const auto a = manual(FeatureSet::covariates_and_preoutcomes, {{0, 2}, {1, 3}}, 4);
  EXPECT_THROW(estimate_matched_x(golden(), a), ConfigurationError);
  const auto b = manual(FeatureSet::covariates_only, {{0, 2}, {1, 3}}, 4);
  EXPECT_THROW(estimate_matched_xy(golden(), b), ConfigurationError);
}

TEST(MatchedXY, PostPeriodDifference) {
  const auto p = make_panel({{0, 3}, {0, 5}, {0, 1}, {0, 2}}, {1, 1, 0, 0});
  const auto a = manual(FeatureSet::covariates_and_preoutcomes, {{0, 2}, {1, 3}}, 4);
  EXPECT_DOUBLE_EQ(estimate_matched_xy(p, a).tau_hat, 2.5);
}

TEST(MatchedXY, NoTreatedUnitsRejected) {
  const auto p = make_panel({{0, 3}, {0, 5}}, {0, 0});
  EXPECT_THROW(estimate_matched_xy(p, manual(FeatureSet::covariates_and_preoutcomes, {{0, 1}}, 2)),
               ValidationError);
}

TEST(MatchedXY, NoiselessExactPreOutcomeMatch) {
  // theta and X are +-1; Y_0 = theta + X, so (X, Y_0) pins theta down exactly.
  DgpParams d = mdid::testing::canonical(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0).to_dgp(400, 0.3);
  d.latent_law = LatentLaw::two_point;
  const auto panel = simulate(d, 3);
  MatchSpec spec;
  spec.features = FeatureSet::covariates_and_preoutcomes;
  spec.method = MatchMethod::exact;
  spec.standardize = false;
  const auto a = match(panel, spec);
  EXPECT_EQ(estimate_matched_xy(panel, a).tau_hat, 2.0);
}

TEST(Estimators, PerPeriodShiftInvariance) {
  rng::Stream s(12, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = mdid::testing::random_dgp(s, 1, 2, 1 + static_cast<Index>(s.below(3)), 80, 0.4);
    const auto panel = simulate(d, 100 + static_cast<std::uint64_t>(trial));
    auto shifted = panel;
    for (Index t = 0; t < panel.periods(); ++t) shifted.y.col(t).array() += 3.0 * (t + 1) - 7.0;
    MatchSpec sx, sxy;
    sxy.features = FeatureSet::covariates_and_preoutcomes;
    sxy.standardize = sx.standardize = true;
    const auto ax = match(panel, sx);
    const auto axy = match(panel, sxy);
    const auto axy_shifted = match(shifted, sxy);
    EXPECT_NEAR(estimate_classic(shifted).tau_hat, estimate_classic(panel).tau_hat, 1e-10);
    EXPECT_NEAR(estimate_matched_x(shifted, ax).tau_hat, estimate_matched_x(panel, ax).tau_hat, 1e-10);
    EXPECT_NEAR(estimate_matched_xy(shifted, axy_shifted).tau_hat, estimate_matched_xy(panel, axy).tau_hat,
                1e-10);
  }
}

TEST(Estimators, SinglePrePeriodFormsAgreeBitwise) {
  rng::Stream s(13, rng::StreamTag::test, 0);
  const auto d = mdid::testing::random_dgp(s, 1, 1, 1, 60, 0.5);
  const auto panel = simulate(d, 1);
  double t1 = 0.0, t0 = 0.0;
  for (Index i = 0; i < panel.n(); ++i) (panel.treated(i) ? t1 : t0) += panel.y(i, 1) - panel.y(i, 0);
  const double canonical_form = t1 / static_cast<double>(panel.n_treated()) -
                                t0 / static_cast<double>(panel.n_control());
  EXPECT_NEAR(estimate_classic(panel).tau_hat, canonical_form, 1e-14);
  for (Index i = 0; i < panel.n(); ++i) EXPECT_EQ(panel.pre_mean(i), panel.y(i, 0));
}

TEST(Estimators, ClassicEqualsTwoWayFixedEffects) {
  rng::Stream s(14, rng::StreamTag::test, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const Index T = 1 + static_cast<Index>(s.below(4));
    const auto d = mdid::testing::random_dgp(s, 1, 1, T, 10 + static_cast<Index>(s.below(30)), 0.4);
    const auto panel = simulate(d, static_cast<std::uint64_t>(trial));
    EXPECT_NEAR(estimate_classic(panel).tau_hat, mdid::testing::twfe_interaction(panel), 1e-10);
  }
}

TEST(Estimators, UnbiasedUnderParallelTrends) {
  // Time-invariant coefficients and a latent imbalance fully explained by X
  // (delta_theta = rho * delta_x), so every estimator centres on tau.
  auto c = mdid::testing::canonical(0.0, 0.0, 0.3, 0.3 * 0.4, 0.4, 1.0, 1.0);
  const auto d = c.to_dgp(400, 0.5);
  const auto mc = run_monte_carlo(d, 10000, 100, 200, 31, 1);
  for (const auto k : kAllEstimators) {
    const auto& m = mc[k];
    EXPECT_LT(std::abs(m.mean - 1.0), 3.0 * m.mc_se_mean) << to_string(k);
  }
}
