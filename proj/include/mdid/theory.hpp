#pragma once

// Closed-form population moments of the three estimators under the linear
// model in dgp.hpp: biases, variances (core factor times sample-size
// coefficient), MSEs and reliabilities.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mdid/dgp.hpp"
#include "mdid/error.hpp"
#include "mdid/estimators.hpp"
#include "mdid/linalg.hpp"

namespace mdid {

/// Composite parameters shared by all formulas.
struct DerivedStructure {
  Vector delta_theta;         // beta_theta_T - mean of pre-period beta_theta_t
  Vector delta_x_coeff;       // same for beta_x
  Vector delta_theta_groups;  // mu_theta1 - mu_theta0
  Vector delta_x_groups;      // mu_x1 - mu_x0
  Matrix proj;                // Sigma_theta_x Sigma_xx^{-1} (q x p)
  Matrix sigma_tilde;         // Sigma_theta_theta - proj Sigma_x_theta
  Vector delta_tilde;         // delta_theta_groups - proj delta_x_groups
  Matrix b_theta;             // T x q, pre-period beta_theta rows
  Matrix sigma_eps;           // sigma_e2 I_T
  Matrix r_matrix;            // Sigma~ B' (B Sigma~ B' + Sigma_eps)^{-1} B
  Vector beta_theta_post;     // beta_theta_T
  Warnings warnings;
};

inline DerivedStructure derive_structure(const DgpParams& d, const ConditionGuard& guard = {}) {
  require_admissible(d);
  DerivedStructure s;
  const Index T = d.t_pre, q = d.q(), p = d.p();
  auto time_variation = [T](const Matrix& coeff) -> Vector {
    return coeff.row(T).transpose() - coeff.topRows(T).colwise().mean().transpose();
  };
  s.delta_theta = time_variation(d.beta_theta);
  s.delta_x_coeff = time_variation(d.beta_x);
  s.delta_theta_groups = d.mu_theta1 - d.mu_theta0;
  s.delta_x_groups = d.mu_x1 - d.mu_x0;
  if (p > 0) {
    linalg::SpdSolver sxx(d.sigma_xx, "sigma_xx", guard, &s.warnings);
    s.proj = sxx.solve(Matrix(d.sigma_theta_x.transpose())).transpose();
  } else {
    s.proj = Matrix::Zero(q, 0);
  }
  s.sigma_tilde = d.sigma_theta_theta - s.proj * d.sigma_theta_x.transpose();
  s.sigma_tilde = 0.5 * (s.sigma_tilde + s.sigma_tilde.transpose());
  s.delta_tilde = s.delta_theta_groups - s.proj * s.delta_x_groups;
  s.b_theta = d.beta_theta.topRows(T);
  s.sigma_eps = d.sigma_e2 * Matrix::Identity(T, T);
  s.beta_theta_post = d.beta_theta.row(T).transpose();
  if (q > 0) {
    const Matrix pre_cov = s.b_theta * s.sigma_tilde * s.b_theta.transpose() + s.sigma_eps;
    linalg::SpdSolver spre(pre_cov, "pre-period outcome covariance (B Sigma~ B' + Sigma_eps)", guard,
                           &s.warnings);
    s.r_matrix = s.sigma_tilde * s.b_theta.transpose() * spre.solve(s.b_theta);
  } else {
    s.r_matrix = Matrix::Zero(0, 0);
  }
  return s;
}

struct EstimatorMoments {
  double bias = 0.0;
  double var_core = 0.0;
  double factor = 0.0;    // sample-size coefficient
  double var_full = 0.0;  // factor * var_core
  double mse = 0.0;       // bias^2 + var_full
};

struct MomentsReport {
  std::array<EstimatorMoments, 3> by_kind{};
  std::optional<double> reliability_scalar;  // q = 1 only
  Index n1 = 0, n0 = 0, n_tilde = 0;
  bool outside_model_assumptions = false;
  Warnings warnings;

  [[nodiscard]] const EstimatorMoments& operator[](EstimatorKind k) const { return by_kind[index_of(k)]; }
  [[nodiscard]] EstimatorMoments& operator[](EstimatorKind k) { return by_kind[index_of(k)]; }
};

/// Biases of the three estimators (the true effect is not included).
inline std::array<double, 3> bias_terms(const DerivedStructure& s) {
  const Vector carry = s.proj.transpose() * s.delta_theta + s.delta_x_coeff;
  const Index q = s.delta_theta.size();
  const Matrix i_minus_r = Matrix::Identity(q, q) - s.r_matrix;
  return {s.delta_theta.dot(s.delta_tilde) + carry.dot(s.delta_x_groups),
          s.delta_theta.dot(s.delta_tilde),
          s.beta_theta_post.dot(i_minus_r * s.delta_tilde)};
}

/// Core (bracketed) variance factors of the three estimators.
inline std::array<double, 3> variance_cores(const DgpParams& d, const DerivedStructure& s) {
  const double T = static_cast<double>(d.t_pre);
  const double noise = (T + 1.0) / T * d.sigma_e2;
  const Index q = d.q();
  const double v_did = noise + s.delta_theta.dot(d.sigma_theta_theta * s.delta_theta) +
                       s.delta_x_coeff.dot(d.sigma_xx * s.delta_x_coeff) +
                       2.0 * s.delta_theta.dot(d.sigma_theta_x * s.delta_x_coeff);
  const double v_x = noise + s.delta_theta.dot(s.sigma_tilde * s.delta_theta);
  const Matrix i_minus_r = Matrix::Identity(q, q) - s.r_matrix;
  const double v_xy = s.beta_theta_post.dot(i_minus_r * s.sigma_tilde * s.beta_theta_post) + d.sigma_e2;
  return {v_did, v_x, v_xy};
}

/// Full bias/variance/MSE report. `n_tilde` is the realized matched count
/// (defaults to n1); when smaller than n1 the matched factor becomes
/// 1/n1 + 1/n_tilde and the report is flagged.
inline MomentsReport moments_generalized(const DgpParams& d, Index n1, Index n0,
                                         std::optional<Index> n_tilde = std::nullopt,
                                         const ConditionGuard& guard = {}) {
  if (n1 < 1 || n0 < 1) throw ValidationError("group sizes must be positive");
  const Index nt = n_tilde.value_or(n1);
  if (nt < 1 || nt > n1) throw ValidationError("matched count must lie in [1, n1]");
  const DerivedStructure s = derive_structure(d, guard);
  MomentsReport r;
  r.n1 = n1;
  r.n0 = n0;
  r.n_tilde = nt;
  r.warnings = s.warnings;
  if (nt < n1) {
    r.outside_model_assumptions = true;
    r.warnings.push_back("matched count below n1: outside model assumptions");
  }
  const auto biases = bias_terms(s);
  const auto cores = variance_cores(d, s);
  const double f_did = 1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n0);
  const double f_match = 1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(nt);
  for (const auto k : kAllEstimators) {
    auto& m = r[k];
    m.bias = biases[index_of(k)];
    m.var_core = cores[index_of(k)];
    m.factor = k == EstimatorKind::classic_did ? f_did : f_match;
    m.var_full = m.factor * m.var_core;
    m.mse = m.bias * m.bias + m.var_full;
  }
  if (d.q() == 1 && d.sigma_e2 > 0.0) {
    const Index T = d.t_pre;
    const double sig2 = s.sigma_tilde(0, 0);
    const double bbar2 = s.b_theta.col(0).squaredNorm() / static_cast<double>(T);
    const double signal = static_cast<double>(T) * bbar2 * sig2;
    r.reliability_scalar = signal / (signal + d.sigma_e2);
  }
  return r;
}

inline MomentsReport variance_generalized(const DgpParams& d, Index n1, Index n0,
                                          const ConditionGuard& guard = {}) {
  return moments_generalized(d, n1, n0, std::nullopt, guard);
}

inline std::array<double, 3> bias_generalized(const DgpParams& d, const ConditionGuard& guard = {}) {
  return bias_terms(derive_structure(d, guard));
}

inline MomentsReport mse_generalized(const DgpParams& d, Index n1, Index n0,
                                     const ConditionGuard& guard = {}) {
  return moments_generalized(d, n1, n0, std::nullopt, guard);
}

struct CanonicalVariances {
  double v_did = 0.0;
  double v_didx = 0.0;
  double v_didxy = 0.0;
  double reliability = 0.0;
};

/// Two-period, scalar-latent, scalar-covariate variances.
inline CanonicalVariances variance_canonical(const CanonicalParams& c, Index n1, Index n0) {
  if (!(std::abs(c.rho) < 1.0)) throw ValidationError("degenerate correlation");
  if (n1 < 1 || n0 < 1) throw ValidationError("group sizes must be positive");
  const double st2 = c.sigma_theta * c.sigma_theta, sx2 = c.sigma_x * c.sigma_x;
  const double dt = c.delta_theta(), dx = c.delta_x();
  const double one_m_rho2 = 1.0 - c.rho * c.rho;
  const double inv1 = 1.0 / static_cast<double>(n1), inv0 = 1.0 / static_cast<double>(n0);
  CanonicalVariances v;
  const double signal = c.beta_theta[0] * c.beta_theta[0] * st2 * one_m_rho2;
  const double denom = signal + c.sigma_e2;
  if (!(denom > 0.0)) throw NumericalError("reliability undefined: zero pre-period variance");
  v.reliability = signal / denom;
  v.v_did = (inv1 + inv0) * (2.0 * c.sigma_e2 + dt * dt * st2 + dx * dx * sx2 +
                             2.0 * dt * dx * c.rho * c.sigma_x * c.sigma_theta);
  v.v_didx = 2.0 * inv1 * (2.0 * c.sigma_e2 + dt * dt * one_m_rho2 * st2);
  v.v_didxy = 2.0 * inv1 *
              (c.sigma_e2 + c.beta_theta[1] * c.beta_theta[1] * st2 * one_m_rho2 * (1.0 - v.reliability));
  return v;
}

struct TradeoffResult {
  bool match_x_better = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Necessary and sufficient condition for covariate matching to lower the
/// variance relative to the classic estimator (v_did >= v_didx).
inline TradeoffResult variance_tradeoff_conditions(const CanonicalParams& c, Index n1, Index n0) {
  if (!(std::abs(c.rho) <= 1.0)) throw ValidationError("correlation outside [-1, 1]");
  if (n1 < 1 || n0 < 1) throw ValidationError("group sizes must be positive");
  const double st = c.sigma_theta, sx = c.sigma_x;
  const double dt = c.delta_theta(), dx = c.delta_x();
  const double inv1 = 1.0 / static_cast<double>(n1), inv0 = 1.0 / static_cast<double>(n0);
  TradeoffResult r;
  r.lhs = (dx * dx * sx * sx + 2.0 * dt * dx * c.rho * st * sx) * (inv0 + inv1);
  r.rhs = dt * dt * st * st * ((1.0 - 2.0 * c.rho * c.rho) * inv1 - inv0) + 2.0 * c.sigma_e2 * (inv1 - inv0);
  r.match_x_better = r.lhs >= r.rhs;
  return r;
}

/// Scalar reliability T * mean(beta_t^2) * s~^2 / (T * mean(beta_t^2) * s~^2 + sigma_e2)
/// for a one-dimensional latent factor.
inline double reliability_scalar(const DgpParams& d, const ConditionGuard& guard = {}) {
  if (d.q() != 1) throw ValidationError("scalar reliability undefined for q != 1");
  const DerivedStructure s = derive_structure(d, guard);
  const double T = static_cast<double>(d.t_pre);
  const double bbar2 = s.b_theta.col(0).squaredNorm() / T;
  const double signal = T * bbar2 * s.sigma_tilde(0, 0);
  const double denom = signal + d.sigma_e2;
  if (!(denom > 0.0)) throw NumericalError("reliability undefined: zero pre-period variance");
  return signal / denom;
}

struct ConvergencePoint {
  Index t_pre = 0;
  double distance = 0.0;  // ||r(T) - I||_2
  bool assumption_violated = false;
  std::string error;      // non-empty when the evaluation failed numerically
};

struct ConvergenceTrace {
  std::vector<ConvergencePoint> points;
  bool strictly_decreasing = true;
  bool assumption_violated = false;
  Warnings warnings;
};

/// Spectral distance of the reliability matrix from the identity along a
/// family of parameter sets indexed by T. A point is flagged when the average
/// pre-period outer product (1/T) B'B is singular, which rules out
/// convergence.
inline ConvergenceTrace reliability_convergence_check(const std::function<DgpParams(Index)>& family,
                                                      const std::vector<Index>& ts,
                                                      const ConditionGuard& guard = {}) {
  ConvergenceTrace trace;
  std::optional<double> prev;
  for (const Index T : ts) {
    ConvergencePoint pt;
    pt.t_pre = T;
    try {
      const DgpParams d = family(T);
      const DerivedStructure s = derive_structure(d, guard);
      const Index q = d.q();
      pt.distance = linalg::spectral_norm(s.r_matrix - Matrix::Identity(q, q));
      const Matrix gram = s.b_theta.transpose() * s.b_theta / static_cast<double>(T);
      if (q == 0 || !linalg::is_pd(gram)) pt.assumption_violated = true;
    } catch (const Error& e) {
      pt.error = e.what();
      pt.distance = std::numeric_limits<double>::quiet_NaN();
      trace.warnings.push_back("T=" + std::to_string(T) + ": " + e.what());
    }
    if (pt.assumption_violated) {
      trace.assumption_violated = true;
      trace.warnings.push_back("T=" + std::to_string(T) + ": assumption violated (singular pre-period signal)");
    }
    if (pt.error.empty()) {
      if (prev && !(pt.distance < *prev)) trace.strictly_decreasing = false;
      prev = pt.distance;
    } else {
      trace.strictly_decreasing = false;
    }
    trace.points.push_back(pt);
  }
  return trace;
}

}  // namespace mdid
