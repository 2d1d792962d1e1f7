#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdid/dgp.hpp"
#include "mdid/error.hpp"
#include "mdid/estimators.hpp"
#include "mdid/matcher.hpp"
#include "mdid/parallel.hpp"
#include "mdid/stats.hpp"

namespace mdid {

struct EmpiricalMoments {
  double mean = 0.0;
  double variance = 0.0;
  Index replicates = 0;
};

namespace detail {

template <class Fn>
decltype(auto) with_replicate_context(std::size_t replicate, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError("replicate " + std::to_string(replicate) + ": " + e.what());
  } catch (const ConfigurationError& e) {
    throw ConfigurationError("replicate " + std::to_string(replicate) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("replicate " + std::to_string(replicate) + ": " + e.what());
  }
}

inline EmpiricalMoments summarize(std::span<const double> xs) {
  EmpiricalMoments m;
  m.replicates = static_cast<Index>(xs.size());
  m.mean = stats::mean(xs);
  m.variance = stats::sample_variance(xs);
  return m;
}

}  // namespace detail

/// Estimates `kind` on every panel (matching with `spec` for the matched
/// kinds; the feature set is forced to the one the kind requires) and returns
/// the sample mean and variance across replicates.
inline EmpiricalMoments empirical_moments(std::span<const PanelData> panels, EstimatorKind kind,
                                          MatchSpec spec = {}) {
  if (panels.size() < 2) throw ValidationError("need >= 2 replicates");
  std::vector<double> est(panels.size());
  for (std::size_t r = 0; r < panels.size(); ++r) {
    est[r] = detail::with_replicate_context(r, [&] {
      if (kind == EstimatorKind::classic_did) return estimate_classic(panels[r]).tau_hat;
      MatchSpec s = spec;
      s.features = required_features(kind);
      const MatchAssignment a = match(panels[r], s);
      return estimate(panels[r], kind, &a).tau_hat;
    });
  }
  return detail::summarize(est);
}

struct MonteCarloSummary {
  double mean = 0.0;
  double variance = 0.0;
  double mse = 0.0;        // mean squared deviation from tau
  double bias = 0.0;       // mean - tau
  double mc_se_mean = 0.0; // sqrt(variance / reps)
  double mc_se_variance = 0.0;
};

struct MonteCarloResult {
  std::array<MonteCarloSummary, 3> by_kind{};
  Index replicates = 0;
  Index n1 = 0, n0 = 0;
  double tau = 0.0;

  [[nodiscard]] const MonteCarloSummary& operator[](EstimatorKind k) const { return by_kind[index_of(k)]; }
};

/// Replicated sampling of all three estimators with ideal 1:1 matching (see
/// IdealMatcher). Replicate r uses the streams derived from (seed, r), and
/// aggregation runs in replicate order, so results do not depend on `threads`.
inline MonteCarloResult run_monte_carlo(const DgpParams& params, Index reps, Index n1, Index n0,
                                        std::uint64_t seed, unsigned threads = 1) {
  if (reps < 2) throw ValidationError("need >= 2 replicates");
  if (n1 < 2 || n0 < n1) throw ValidationError("group sizes need n0 >= n1 >= 2");
  const IdealMatcher matcher(params);
  const auto n = static_cast<std::size_t>(reps);
  std::vector<std::array<double, 3>> est(n);
  parallel_for(n, threads, [&](std::size_t r) {
    est[r] = detail::with_replicate_context(r, [&] {
      const IdealMatchedSample s = matcher.draw(n1, n0, seed, r);
      const auto ax = identity_assignment(s.matched_x, FeatureSet::covariates_only);
      const auto axy = identity_assignment(s.matched_xy, FeatureSet::covariates_and_preoutcomes);
      return std::array<double, 3>{estimate_classic(s.panel).tau_hat,
                                   estimate_matched_x(s.matched_x, ax).tau_hat,
                                   estimate_matched_xy(s.matched_xy, axy).tau_hat};
    });
  });

  MonteCarloResult out;
  out.replicates = reps;
  out.n1 = n1;
  out.n0 = n0;
  out.tau = params.tau;
  std::vector<double> col(n);
  for (const auto k : kAllEstimators) {
    for (std::size_t r = 0; r < n; ++r) col[r] = est[r][index_of(k)];
    auto& m = out.by_kind[index_of(k)];
    m.mean = stats::mean(col);
    m.variance = stats::sample_variance(col);
    m.mse = stats::mean_square_about(col, params.tau);
    m.bias = m.mean - params.tau;
    m.mc_se_mean = std::sqrt(m.variance / static_cast<double>(reps));
    m.mc_se_variance = m.variance * std::sqrt(2.0 / static_cast<double>(reps - 1));
  }
  return out;
}

}  // namespace mdid
