#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/error.hpp"
#include "mdid/matcher.hpp"
#include "mdid/panel.hpp"
#include "mdid/stats.hpp"

namespace mdid {

enum class EstimatorKind { classic_did, matched_x, matched_x_y };

inline constexpr std::array<EstimatorKind, 3> kAllEstimators{
    EstimatorKind::classic_did, EstimatorKind::matched_x, EstimatorKind::matched_x_y};

inline std::string_view to_string(EstimatorKind k) noexcept {
  switch (k) {
    case EstimatorKind::classic_did: return "classic_did";
    case EstimatorKind::matched_x: return "matched_x";
    case EstimatorKind::matched_x_y: return "matched_x_y";
  }
  return "classic_did";
}

inline EstimatorKind parse_estimator_kind(std::string_view s) {
  if (s == "classic_did" || s == "classic") return EstimatorKind::classic_did;
  if (s == "matched_x") return EstimatorKind::matched_x;
  if (s == "matched_x_y" || s == "matched_xy") return EstimatorKind::matched_x_y;
  throw ValidationError("unknown estimator '" + std::string(s) + "'");
}

inline constexpr std::size_t index_of(EstimatorKind k) noexcept { return static_cast<std::size_t>(k); }

/// Feature set a matched estimator must be built on.
inline FeatureSet required_features(EstimatorKind k) {
  if (k == EstimatorKind::matched_x) return FeatureSet::covariates_only;
  if (k == EstimatorKind::matched_x_y) return FeatureSet::covariates_and_preoutcomes;
  throw ConfigurationError("classic_did does not use a match assignment");
}

enum class PreMeanBasis { single_period, averaged_t };

struct EstimateResult {
  EstimatorKind kind = EstimatorKind::classic_did;
  double tau_hat = 0.0;
  Index n1 = 0;
  Index n0_or_ntilde = 0;  // n0 for classic, matched pair count otherwise
  PreMeanBasis basis = PreMeanBasis::single_period;
  Warnings warnings;
};

namespace detail {

inline PreMeanBasis basis_of(const PanelData& p) {
  return p.t_pre == 1 ? PreMeanBasis::single_period : PreMeanBasis::averaged_t;
}

inline void check_assignment(const PanelData& panel, const MatchAssignment& a, EstimatorKind kind,
                             EstimateResult& r) {
  if (a.features != required_features(kind))
    throw ConfigurationError(std::string(to_string(kind)) + " needs an assignment built on " +
                             std::string(to_string(required_features(kind))) + " features");
  if (a.pairs.empty()) throw ValidationError("empty match assignment");
  const Index n1 = panel.n_treated();
  if (n1 == 0) throw ValidationError("degenerate group: no treated units");
  for (const auto& pr : a.pairs) {
    if (pr.treated < 0 || pr.treated >= panel.n() || pr.control < 0 || pr.control >= panel.n() ||
        !panel.treated(pr.treated) || panel.treated(pr.control))
      throw ValidationError("match assignment does not fit the panel");
  }
  if (a.matched_count() < n1)
    r.warnings.push_back("matched " + std::to_string(a.matched_count()) + " of " +
                         std::to_string(n1) + " treated units: outside model assumptions");
}

}  // namespace detail

/// Treated mean of (Y_T - pre-period mean) minus the same mean over all
/// controls. For T = 1 the pre-period mean is Y_0.
inline EstimateResult estimate_classic(const PanelData& panel) {
  const Index n1 = panel.n_treated(), n0 = panel.n_control();
  if (n1 == 0 || n0 == 0) throw ValidationError("degenerate group");
  stats::CompensatedSum s1, s0;
  for (Index i = 0; i < panel.n(); ++i) (panel.treated(i) ? s1 : s0).add(panel.contrast(i));
  EstimateResult r;
  r.kind = EstimatorKind::classic_did;
  r.tau_hat = s1.value() / static_cast<double>(n1) - s0.value() / static_cast<double>(n0);
  r.n1 = n1;
  r.n0_or_ntilde = n0;
  r.basis = detail::basis_of(panel);
  return r;
}

/// Treated mean of (Y_T - pre-period mean) over all treated units minus the
/// matched-control sum of the same contrast divided by the number of pairs.
inline EstimateResult estimate_matched_x(const PanelData& panel, const MatchAssignment& a) {
  EstimateResult r;
  r.kind = EstimatorKind::matched_x;
  detail::check_assignment(panel, a, r.kind, r);
  const Index n1 = panel.n_treated();
  stats::CompensatedSum s1, s0;
  for (Index i = 0; i < panel.n(); ++i)
    if (panel.treated(i)) s1.add(panel.contrast(i));
  for (const auto& pr : a.pairs) s0.add(panel.contrast(pr.control));
  r.tau_hat = s1.value() / static_cast<double>(n1) - s0.value() / static_cast<double>(a.matched_count());
  r.n1 = n1;
  r.n0_or_ntilde = a.matched_count();
  r.basis = detail::basis_of(panel);
  return r;
}

/// Post-period difference in means between treated units and their matched
/// controls.
inline EstimateResult estimate_matched_xy(const PanelData& panel, const MatchAssignment& a) {
  EstimateResult r;
  r.kind = EstimatorKind::matched_x_y;
  detail::check_assignment(panel, a, r.kind, r);
  const Index n1 = panel.n_treated(), T = panel.t_pre;
  stats::CompensatedSum s1, s0;
  for (Index i = 0; i < panel.n(); ++i)
    if (panel.treated(i)) s1.add(panel.y(i, T));
  for (const auto& pr : a.pairs) s0.add(panel.y(pr.control, T));
  r.tau_hat = s1.value() / static_cast<double>(n1) - s0.value() / static_cast<double>(a.matched_count());
  r.n1 = n1;
  r.n0_or_ntilde = a.matched_count();
  r.basis = detail::basis_of(panel);
  return r;
}

/// Dispatches on the estimator kind. The assignment is ignored for classic.
inline EstimateResult estimate(const PanelData& panel, EstimatorKind kind,
                               const MatchAssignment* a = nullptr) {
  if (kind == EstimatorKind::classic_did) return estimate_classic(panel);
  if (a == nullptr) throw ConfigurationError("matched estimator needs a match assignment");
  return kind == EstimatorKind::matched_x ? estimate_matched_x(panel, *a) : estimate_matched_xy(panel, *a);
}

}  // namespace mdid
