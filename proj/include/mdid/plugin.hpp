#pragma once

// Plug-in estimates of the bias, variance and MSE of the three estimators
// from observed data alone. Covariate effects are removed by per-period
// control-group regressions; the latent channel is then read off the
// residualized outcomes.
//
// All second moments are pooled within-group: each unit is centred at its
// own group mean and the sums are divided by n - 1.

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdid/error.hpp"
#include "mdid/estimators.hpp"
#include "mdid/linalg.hpp"
#include "mdid/panel.hpp"
#include "mdid/theory.hpp"

namespace mdid {

struct ResidualizedPanel {
  Matrix y_tilde;         // n x (T+1), Y_it - beta_hat_t' X_i
  Matrix beta_x_hat;      // (T+1) x p slopes
  Vector intercept_hat;   // T+1, fitted but not subtracted
  Vector r_squared;       // per period, control-group fit
  Index n_control_fit = 0;
};

/// Per-period least squares of Y_t on (1, X) over the control group, applied
/// to every unit.
inline ResidualizedPanel residualize(const PanelData& panel) {
  panel.validate_shape();
  const Index p = panel.p(), periods = panel.periods();
  const auto controls = panel.control_indices();
  const auto m = static_cast<Index>(controls.size());
  ResidualizedPanel out;
  out.n_control_fit = m;
  out.beta_x_hat = Matrix::Zero(periods, p);
  out.intercept_hat = Vector::Zero(periods);
  out.r_squared = Vector::Zero(periods);
  if (p == 0) {
    out.y_tilde = panel.y;
    return out;
  }
  if (m < p + 2)
    throw ValidationError("residualization needs at least p + 2 = " + std::to_string(p + 2) +
                          " control units (found " + std::to_string(m) + ")");
  Matrix design(m, p + 1);
  Matrix targets(m, periods);
  for (Index k = 0; k < m; ++k) {
    const Index i = controls[static_cast<std::size_t>(k)];
    design(k, 0) = 1.0;
    design.row(k).tail(p) = panel.x.row(i);
    targets.row(k) = panel.y.row(i);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < p + 1) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Index k = qr.rank(); k < p + 1; ++k) {
      const Index c = perm(k);
      if (!cols.empty()) cols += ", ";
      cols += c == 0 ? std::string("intercept") : "x" + std::to_string(c);
    }
    throw ValidationError("rank-deficient covariates: collinear columns " + cols);
  }
  const Matrix coef = qr.solve(targets);  // (p+1) x periods
  out.intercept_hat = coef.row(0).transpose();
  out.beta_x_hat = coef.bottomRows(p).transpose();
  for (Index t = 0; t < periods; ++t) {
    const Vector resid = targets.col(t) - design * coef.col(t);
    const double tss = (targets.col(t).array() - targets.col(t).mean()).square().sum();
    out.r_squared(t) = tss > 0.0 ? 1.0 - resid.squaredNorm() / tss : 1.0;
  }
  out.y_tilde = panel.y - panel.x * out.beta_x_hat.transpose();
  return out;
}

namespace detail {

/// Columns of `m` centred at their group means (rows follow panel order).
inline Matrix center_within_groups(const PanelData& panel, const Matrix& m) {
  const Index n = panel.n();
  Vector sum1 = Vector::Zero(m.cols()), sum0 = Vector::Zero(m.cols());
  const Index n1 = panel.n_treated(), n0 = n - n1;
  for (Index i = 0; i < n; ++i) (panel.treated(i) ? sum1 : sum0) += m.row(i).transpose();
  const Vector mean1 = sum1 / static_cast<double>(n1), mean0 = sum0 / static_cast<double>(n0);
  Matrix c = m;
  for (Index i = 0; i < n; ++i) c.row(i) -= (panel.treated(i) ? mean1 : mean0).transpose();
  return c;
}

/// Pooled within-group covariance of the columns of `m`, n - 1 denominator.
inline Matrix pooled_covariance(const PanelData& panel, const Matrix& m) {
  const Matrix c = center_within_groups(panel, m);
  return c.transpose() * c / static_cast<double>(panel.n() - 1);
}

/// Treated-minus-control difference of column means.
inline Vector group_contrast(const PanelData& panel, const Matrix& m) {
  Vector sum1 = Vector::Zero(m.cols()), sum0 = Vector::Zero(m.cols());
  for (Index i = 0; i < panel.n(); ++i) (panel.treated(i) ? sum1 : sum0) += m.row(i).transpose();
  return sum1 / static_cast<double>(panel.n_treated()) - sum0 / static_cast<double>(panel.n_control());
}

inline void check_groups(const PanelData& panel) {
  if (panel.n_treated() < 2 || panel.n_control() < 2)
    throw ValidationError("degenerate group: plug-in moments need at least 2 units per group");
}

}  // namespace detail

struct PluginReport {
  std::array<EstimatorMoments, 3> by_kind{};
  std::optional<double> reliability_hat;
  Vector delta_x_hat;
  Index n1 = 0, n0 = 0, n_tilde = 0;
  Warnings warnings;

  [[nodiscard]] const EstimatorMoments& operator[](EstimatorKind k) const { return by_kind[index_of(k)]; }
  [[nodiscard]] EstimatorMoments& operator[](EstimatorKind k) { return by_kind[index_of(k)]; }
};

/// Building blocks shared by the bias and variance estimates.
struct PluginParts {
  ResidualizedPanel res;
  Vector d_tilde;        // Y~_T - pre-period mean of Y~, per unit
  Vector slope_gap;      // beta_hat_T - mean of pre-period beta_hat_t
  Vector delta_x_hat;    // treated-minus-control covariate means
  Matrix sigma_xx_hat;   // pooled within-group covariance of X
  double var_post = 0.0;  // Var(Y~_T)
  Vector cov_post_pre;   // Cov(Y~_T, Y~_0..T-1)
  Matrix var_pre;        // Var(Y~_0..T-1)
  Vector contrast_pre;   // group contrast of Y~_0..T-1
  double contrast_post = 0.0;
};

inline PluginParts plugin_parts(const PanelData& panel) {
  detail::check_groups(panel);
  PluginParts s;
  s.res = residualize(panel);
  const Index T = panel.t_pre;
  const Matrix& yt = s.res.y_tilde;
  s.d_tilde = yt.col(T) - yt.leftCols(T).rowwise().mean();
  s.slope_gap = s.res.beta_x_hat.row(T).transpose() - s.res.beta_x_hat.topRows(T).colwise().mean().transpose();
  s.delta_x_hat = detail::group_contrast(panel, panel.x);
  s.sigma_xx_hat = detail::pooled_covariance(panel, panel.x);
  const Matrix cov = detail::pooled_covariance(panel, yt);  // (T+1) x (T+1)
  s.var_post = cov(T, T);
  s.cov_post_pre = cov.row(T).head(T).transpose();
  s.var_pre = cov.topLeftCorner(T, T);
  const Vector contrast = detail::group_contrast(panel, yt);
  s.contrast_post = contrast(T);
  s.contrast_pre = contrast.head(T);
  return s;
}

/// Full plug-in report. `n_tilde` is the realized matched count used in the
/// matched sample-size coefficients (defaults to n1).
inline PluginReport plugin_report(const PanelData& panel, std::optional<Index> n_tilde = std::nullopt,
                                  const ConditionGuard& guard = {}) {
  const PluginParts s = plugin_parts(panel);
  PluginReport r;
  r.n1 = panel.n_treated();
  r.n0 = panel.n_control();
  r.n_tilde = n_tilde.value_or(r.n1);
  if (r.n_tilde < 1 || r.n_tilde > r.n1) throw ValidationError("matched count must lie in [1, n1]");
  if (r.n_tilde < r.n1) r.warnings.push_back("matched count below n1: outside model assumptions");
  r.delta_x_hat = s.delta_x_hat;

  linalg::SpdSolver v(s.var_pre, "sample variance of pre-period residualized outcomes", guard, &r.warnings);
  const double dd = s.contrast_post - s.contrast_pre.mean();
  const std::array<double, 3> bias{dd + s.slope_gap.dot(s.delta_x_hat), dd,
                                   s.contrast_post - s.cov_post_pre.dot(v.solve(s.contrast_pre))};
  const Matrix d_col = s.d_tilde;
  const double var_d = detail::pooled_covariance(panel, d_col)(0, 0);
  const std::array<double, 3> core{var_d + s.slope_gap.dot(s.sigma_xx_hat * s.slope_gap), var_d,
                                   s.var_post - s.cov_post_pre.dot(v.solve(s.cov_post_pre))};

  const double f_did = 1.0 / static_cast<double>(r.n1) + 1.0 / static_cast<double>(r.n0);
  const double f_match = 1.0 / static_cast<double>(r.n1) + 1.0 / static_cast<double>(r.n_tilde);
  for (const auto k : kAllEstimators) {
    auto& m = r[k];
    m.bias = bias[index_of(k)];
    // Schur complements of a sample covariance are PSD; only rounding goes below 0.
    m.var_core = std::max(core[index_of(k)], 0.0);
    m.factor = k == EstimatorKind::classic_did ? f_did : f_match;
    m.var_full = m.factor * m.var_core;
    m.mse = m.bias * m.bias + m.var_full;
  }
  return r;
}

inline std::array<double, 3> estimate_bias(const PanelData& panel, const ConditionGuard& guard = {}) {
  const auto r = plugin_report(panel, std::nullopt, guard);
  return {r.by_kind[0].bias, r.by_kind[1].bias, r.by_kind[2].bias};
}

inline std::array<double, 3> estimate_variance(const PanelData& panel, const ConditionGuard& guard = {}) {
  const auto r = plugin_report(panel, std::nullopt, guard);
  return {r.by_kind[0].var_core, r.by_kind[1].var_core, r.by_kind[2].var_core};
}

struct ReliabilityEstimate {
  double r_hat = 0.0;
  double sigma_e2_hat = 0.0;
  Vector beta2_hat;  // per pre-period, clipped at 0
  Warnings warnings;
};

/// Single-factor reliability from two pre-periods (t, t_prime) presumed to
/// share the same latent coefficient.
inline ReliabilityEstimate estimate_reliability(const PanelData& panel, Index t = 0, Index t_prime = 1) {
  const Index T = panel.t_pre;
  if (T < 2) throw ValidationError("reliability estimate needs at least 2 pre-treatment periods");
  if (t < 0 || t_prime < 0 || t >= T || t_prime >= T || t == t_prime)
    throw ValidationError("reliability periods must be two distinct pre-treatment periods");
  detail::check_groups(panel);
  const ResidualizedPanel res = residualize(panel);
  const Matrix pre = res.y_tilde.leftCols(T);
  const Matrix cov = detail::pooled_covariance(panel, pre);
  ReliabilityEstimate out;
  // Var(a - b) = Var(a) + Var(b) - 2 Cov(a, b).
  out.sigma_e2_hat = 0.5 * (cov(t, t) + cov(t_prime, t_prime) - 2.0 * cov(t, t_prime));
  out.beta2_hat = (cov.diagonal().array() - out.sigma_e2_hat).cwiseMax(0.0);
  if ((cov.diagonal().array() < out.sigma_e2_hat).all()) out.warnings.push_back("reliability clipped at 0");
  const double signal = static_cast<double>(T) * out.beta2_hat.mean();
  const double denom = signal + out.sigma_e2_hat;
  out.r_hat = denom > 0.0 ? signal / denom : 0.0;
  return out;
}

inline double bias_correct(double tau_hat, double bias_hat) noexcept { return tau_hat - bias_hat; }

}  // namespace mdid
