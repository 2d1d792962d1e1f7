#pragma once

// Linear structural equation model for synthetic panels:
//
//   Y_{i,t}(0) = beta0_t + beta_theta_t' theta_i + beta_x_t' X_i + eps_{i,t}
//   Y_{i,t}(1) = Y_{i,t}(0) + tau * 1{t = T}
//
// with (theta, X) drawn per group with group-specific means and shared
// covariance blocks.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/error.hpp"
#include "mdid/linalg.hpp"
#include "mdid/panel.hpp"
#include "mdid/rng.hpp"

namespace mdid {

/// Distribution family for the latent/covariate vector and the noise. All
/// families are standardized (mean 0, variance 1 per component) and then
/// affinely mapped to the requested moments.
enum class LatentLaw { gaussian, shifted_uniform, two_point };

inline std::string_view to_string(LatentLaw law) noexcept {
  switch (law) {
    case LatentLaw::gaussian: return "gaussian";
    case LatentLaw::shifted_uniform: return "shifted-uniform";
    case LatentLaw::two_point: return "two-point";
  }
  return "gaussian";
}

inline LatentLaw parse_latent_law(std::string_view s) {
  if (s == "gaussian") return LatentLaw::gaussian;
  if (s == "shifted-uniform" || s == "shifted_uniform") return LatentLaw::shifted_uniform;
  if (s == "two-point" || s == "two_point") return LatentLaw::two_point;
  throw ValidationError("unknown latent_law '" + std::string(s) + "'");
}

struct DgpParams {
  Index n_units = 0;
  double p_treated = 0.5;
  Index t_pre = 1;             // T; periods are 0..T
  Vector beta0;                // T+1
  Matrix beta_theta;           // (T+1) x q, row t is beta_theta_t'
  Matrix beta_x;               // (T+1) x p
  Vector mu_theta0, mu_theta1; // q
  Vector mu_x0, mu_x1;         // p
  Matrix sigma_theta_theta;    // q x q
  Matrix sigma_xx;             // p x p
  Matrix sigma_theta_x;        // q x p
  double sigma_e2 = 1.0;
  double tau = 0.0;
  LatentLaw latent_law = LatentLaw::gaussian;

  [[nodiscard]] Index q() const noexcept { return beta_theta.cols(); }
  [[nodiscard]] Index p() const noexcept { return beta_x.cols(); }
  [[nodiscard]] Index periods() const noexcept { return t_pre + 1; }

  /// Stacked covariance [[S_tt, S_tx], [S_tx', S_xx]] of (theta, X).
  [[nodiscard]] Matrix joint_covariance() const {
    const Index q_ = q(), p_ = p();
    Matrix s(q_ + p_, q_ + p_);
    s.topLeftCorner(q_, q_) = sigma_theta_theta;
    s.topRightCorner(q_, p_) = sigma_theta_x;
    s.bottomLeftCorner(p_, q_) = sigma_theta_x.transpose();
    s.bottomRightCorner(p_, p_) = sigma_xx;
    return s;
  }
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

/// Lists every violated admissibility condition. Noise-free models
/// (sigma_e2 == 0) are admissible with a warning; they are useful for exact
/// hand checks but leave some closed-form quantities undefined.
inline ValidationReport validate_params(const DgpParams& d) {
  ValidationReport r;
  auto bad = [&r](std::string s) { r.violations.push_back(std::move(s)); };
  const Index periods = d.periods();
  const Index q = d.q(), p = d.p();

  if (d.n_units < 4) bad("n_units must be at least 4");
  if (!(d.p_treated > 0.0 && d.p_treated <= 0.5)) bad("p outside (0, 0.5]");
  if (d.t_pre < 1) bad("t_pre must be at least 1");
  if (d.sigma_e2 < 0.0 || !std::isfinite(d.sigma_e2)) bad("sigma_e2 must be non-negative");
  if (d.sigma_e2 == 0.0) r.warnings.push_back("sigma_e2 = 0: noise-free model");
  if (!std::isfinite(d.tau)) bad("tau must be finite");

  if (d.beta0.size() != periods) bad("beta0 must have T+1 entries");
  if (d.beta_theta.rows() != periods) bad("beta_theta must have T+1 rows");
  if (d.beta_x.rows() != periods) bad("beta_x must have T+1 rows");
  if (d.mu_theta0.size() != q || d.mu_theta1.size() != q) bad("mu_theta vectors must have q entries");
  if (d.mu_x0.size() != p || d.mu_x1.size() != p) bad("mu_x vectors must have p entries");
  const bool shapes_ok = d.sigma_theta_theta.rows() == q && d.sigma_theta_theta.cols() == q &&
                         d.sigma_xx.rows() == p && d.sigma_xx.cols() == p &&
                         d.sigma_theta_x.rows() == q && d.sigma_theta_x.cols() == p;
  if (!shapes_ok) {
    bad("covariance blocks have inconsistent shapes");
    return r;
  }
  if (!linalg::is_pd(d.sigma_theta_theta) ||
      (d.sigma_theta_theta - d.sigma_theta_theta.transpose()).cwiseAbs().sum() > 1e-12)
    bad("sigma_theta_theta not positive definite");
  if (!linalg::is_pd(d.sigma_xx) || (d.sigma_xx - d.sigma_xx.transpose()).cwiseAbs().sum() > 1e-12)
    bad("sigma_xx not positive definite");
  if (!linalg::is_psd(d.joint_covariance())) bad("joint covariance not PSD");
  return r;
}

inline void require_admissible(const DgpParams& d) {
  const auto r = validate_params(d);
  if (!r.ok()) {
    std::string msg = "inadmissible parameters:";
    for (const auto& v : r.violations) msg += " " + v + ";";
    throw ValidationError(msg);
  }
}

/// Univariate two-period restriction (q = p = 1, T = 1). Differences are
/// always recomputed from the coefficient and mean arrays.
struct CanonicalParams {
  double sigma_theta = 1.0;
  double sigma_x = 1.0;
  double rho = 0.0;
  std::array<double, 2> beta0{0.0, 0.0};
  std::array<double, 2> beta_theta{1.0, 1.0};  // {t=0, t=1}
  std::array<double, 2> beta_x{1.0, 1.0};
  std::array<double, 2> mu_theta{0.0, 0.0};    // {control, treated}
  std::array<double, 2> mu_x{0.0, 0.0};
  double sigma_e2 = 1.0;
  double tau = 0.0;

  [[nodiscard]] double delta_theta() const noexcept { return beta_theta[1] - beta_theta[0]; }
  [[nodiscard]] double delta_x() const noexcept { return beta_x[1] - beta_x[0]; }
  [[nodiscard]] double imbalance_theta() const noexcept { return mu_theta[1] - mu_theta[0]; }
  [[nodiscard]] double imbalance_x() const noexcept { return mu_x[1] - mu_x[0]; }

  [[nodiscard]] DgpParams to_dgp(Index n_units, double p_treated,
                                 LatentLaw law = LatentLaw::gaussian) const {
    DgpParams d;
    d.n_units = n_units;
    d.p_treated = p_treated;
    d.t_pre = 1;
    d.beta0 = Vector{{beta0[0], beta0[1]}};
    d.beta_theta = Matrix{{beta_theta[0]}, {beta_theta[1]}};
    d.beta_x = Matrix{{beta_x[0]}, {beta_x[1]}};
    d.mu_theta0 = Vector{{mu_theta[0]}};
    d.mu_theta1 = Vector{{mu_theta[1]}};
    d.mu_x0 = Vector{{mu_x[0]}};
    d.mu_x1 = Vector{{mu_x[1]}};
    d.sigma_theta_theta = Matrix{{sigma_theta * sigma_theta}};
    d.sigma_xx = Matrix{{sigma_x * sigma_x}};
    d.sigma_theta_x = Matrix{{rho * sigma_theta * sigma_x}};
    d.sigma_e2 = sigma_e2;
    d.tau = tau;
    d.latent_law = law;
    return d;
  }

  static CanonicalParams from_dgp(const DgpParams& d) {
    if (d.q() != 1 || d.p() != 1 || d.t_pre != 1)
      throw ValidationError("canonical parameters need q = p = 1 and T = 1");
    CanonicalParams c;
    c.sigma_theta = std::sqrt(d.sigma_theta_theta(0, 0));
    c.sigma_x = std::sqrt(d.sigma_xx(0, 0));
    c.rho = d.sigma_theta_x(0, 0) / (c.sigma_theta * c.sigma_x);
    c.beta0 = {d.beta0(0), d.beta0(1)};
    c.beta_theta = {d.beta_theta(0, 0), d.beta_theta(1, 0)};
    c.beta_x = {d.beta_x(0, 0), d.beta_x(1, 0)};
    c.mu_theta = {d.mu_theta0(0), d.mu_theta1(0)};
    c.mu_x = {d.mu_x0(0), d.mu_x1(0)};
    c.sigma_e2 = d.sigma_e2;
    c.tau = d.tau;
    return c;
  }
};

namespace detail {

/// Standardized draw (mean 0, variance 1) from the chosen family.
inline double standard_draw(rng::Stream& s, LatentLaw law) {
  switch (law) {
    case LatentLaw::gaussian: return s.normal();
    case LatentLaw::shifted_uniform: return (2.0 * s.uniform() - 1.0) * std::sqrt(3.0);
    case LatentLaw::two_point: return s.uniform() < 0.5 ? -1.0 : 1.0;
  }
  return 0.0;
}

/// Draws units of the model given their treatment flags.
class UnitSampler {
 public:
  explicit UnitSampler(const DgpParams& d) : d_(d), factor_(linalg::psd_factor(d.joint_covariance())) {
    sigma_e_ = std::sqrt(d.sigma_e2);
  }

  /// Fills theta/x/y rows for unit i in `out` (which must be sized already).
  void draw_unit(rng::Stream& s, bool treated, Index i, PanelData& out) const {
    const Index q = d_.q(), p = d_.p(), k = q + p;
    Vector u(k);
    for (Index j = 0; j < k; ++j) u(j) = standard_draw(s, d_.latent_law);
    Vector v = factor_ * u;
    Vector theta = v.head(q) + (treated ? d_.mu_theta1 : d_.mu_theta0);
    Vector x = v.tail(p) + (treated ? d_.mu_x1 : d_.mu_x0);
    out.theta->row(i) = theta.transpose();
    out.x.row(i) = x.transpose();
    for (Index t = 0; t < d_.periods(); ++t) {
      double yt = d_.beta0(t) + d_.beta_theta.row(t).dot(theta) + d_.beta_x.row(t).dot(x) +
                  sigma_e_ * standard_draw(s, d_.latent_law);
      if (treated && t == d_.t_pre) yt += d_.tau;
      out.y(i, t) = yt;
    }
  }

  [[nodiscard]] PanelData draw_panel(rng::Stream& s, const std::vector<std::uint8_t>& z) const {
    const auto n = static_cast<Index>(z.size());
    PanelData out;
    out.t_pre = d_.t_pre;
    out.z = z;
    out.y.resize(n, d_.periods());
    out.x.resize(n, d_.p());
    out.theta = Matrix(n, d_.q());
    out.unit_ids.reserve(z.size());
    for (Index i = 0; i < n; ++i) {
      out.unit_ids.push_back("u" + std::to_string(i));
      draw_unit(s, z[static_cast<std::size_t>(i)] != 0, i, out);
    }
    return out;
  }

 private:
  const DgpParams& d_;
  Matrix factor_;
  double sigma_e_ = 1.0;
};

}  // namespace detail

/// Simulates a panel of params.n_units units with Bernoulli(p) treatment.
/// Treatment vectors are redrawn until n1 >= 2 and n0 >= n1. Pure function of
/// (params, seed).
inline PanelData simulate(const DgpParams& params, std::uint64_t seed) {
  require_admissible(params);
  rng::Stream s(seed, rng::StreamTag::simulate, 0);
  std::vector<std::uint8_t> z(static_cast<std::size_t>(params.n_units));
  constexpr int kMaxAttempts = 100000;
  bool accepted = false;
  for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
    Index n1 = 0;
    for (auto& zi : z) {
      zi = s.bernoulli(params.p_treated) ? 1 : 0;
      n1 += zi;
    }
    accepted = n1 >= 2 && params.n_units - n1 >= n1;
  }
  if (!accepted) throw ValidationError("could not draw a treatment vector with n0 >= n1 >= 2");
  return detail::UnitSampler(params).draw_panel(s, z);
}

/// Simulates a panel with fixed group sizes: units 0..n1-1 treated, then n0
/// controls. `replicate` selects an independent stream for the same seed.
inline PanelData simulate_groups(const DgpParams& params, Index n1, Index n0, std::uint64_t seed,
                                 std::uint64_t replicate = 0) {
  require_admissible(params);
  if (n1 < 1 || n0 < 1) throw ValidationError("group sizes must be positive");
  rng::Stream s(seed, rng::StreamTag::simulate, replicate + 1);
  std::vector<std::uint8_t> z(static_cast<std::size_t>(n1 + n0), 0);
  std::fill(z.begin(), z.begin() + n1, std::uint8_t{1});
  return detail::UnitSampler(params).draw_panel(s, z);
}

/// One replicate realising exact 1:1 matching: the treated units of `panel`
/// are paired with control-population units whose matched features coincide
/// with theirs. Matched controls are drawn from the control-group conditional
/// law given the features, which requires the Gaussian family.
struct IdealMatchedSample {
  PanelData panel;       // n1 treated (rows 0..n1-1) then n0 controls
  PanelData matched_x;   // n1 treated then n1 controls matched on X
  PanelData matched_xy;  // n1 treated then n1 controls matched on (X, Y_0..Y_{T-1})
};

/// Conditional-law machinery for ideal matching, precomputed once per
/// parameter set.
class IdealMatcher {
 public:
  explicit IdealMatcher(const DgpParams& d, const ConditionGuard& guard = {}) : d_(d) {
    require_admissible(d);
    if (d.latent_law != LatentLaw::gaussian)
      throw ValidationError("ideal matching needs the gaussian latent_law");
    const Index q = d.q(), p = d.p(), T = d.t_pre;
    if (p > 0) {
      linalg::SpdSolver sxx(d.sigma_xx, "sigma_xx", guard);
      proj_ = sxx.solve(Matrix(d.sigma_theta_x.transpose())).transpose();  // q x p
    } else {
      proj_ = Matrix::Zero(q, 0);
    }
    const Matrix sigma_tilde = d.sigma_theta_theta - proj_ * d.sigma_theta_x.transpose();
    tilde_factor_ = linalg::psd_factor(sigma_tilde);
    const Matrix b = d.beta_theta.topRows(T);  // T x q
    const Matrix s_pre = b * sigma_tilde * b.transpose() + d.sigma_e2 * Matrix::Identity(T, T);
    linalg::SpdSolver spre(s_pre, "pre-period outcome covariance", guard);
    gain_ = spre.solve(Matrix(b * sigma_tilde)).transpose();  // q x T
    const Matrix post = sigma_tilde - gain_ * b * sigma_tilde;
    post_factor_ = linalg::psd_factor(0.5 * (post + post.transpose()));
    sigma_e_ = std::sqrt(d.sigma_e2);
  }

  [[nodiscard]] IdealMatchedSample draw(Index n1, Index n0, std::uint64_t seed,
                                        std::uint64_t replicate) const {
    IdealMatchedSample out;
    out.panel = simulate_groups(d_, n1, n0, seed, replicate);
    rng::Stream s(seed, rng::StreamTag::monte_carlo, replicate);
    out.matched_x = skeleton(out.panel, n1);
    out.matched_xy = skeleton(out.panel, n1);
    const Index q = d_.q(), T = d_.t_pre;
    const Matrix b = d_.beta_theta.topRows(T);
    const Matrix bx = d_.beta_x.topRows(T);
    for (Index k = 0; k < n1; ++k) {
      const Index row = n1 + k;
      const Vector x = out.panel.x.row(k).transpose();
      const Vector m = d_.mu_theta0 + proj_ * (x - d_.mu_x0);

      Vector xi(q);
      for (Index j = 0; j < q; ++j) xi(j) = s.normal();
      const Vector theta_x = m + tilde_factor_ * xi;
      out.matched_x.x.row(row) = x.transpose();
      out.matched_x.theta->row(row) = theta_x.transpose();
      for (Index t = 0; t <= T; ++t)
        out.matched_x.y(row, t) = d_.beta0(t) + d_.beta_theta.row(t).dot(theta_x) +
                                  d_.beta_x.row(t).dot(x) + sigma_e_ * s.normal();

      const Vector y_pre = out.panel.y.row(k).head(T).transpose();
      const Vector resid = y_pre - d_.beta0.head(T) - b * m - bx * x;
      for (Index j = 0; j < q; ++j) xi(j) = s.normal();
      const Vector theta_xy = m + gain_ * resid + post_factor_ * xi;
      out.matched_xy.x.row(row) = x.transpose();
      out.matched_xy.theta->row(row) = theta_xy.transpose();
      out.matched_xy.y.row(row).head(T) = y_pre.transpose();
      out.matched_xy.y(row, T) = d_.beta0(T) + d_.beta_theta.row(T).dot(theta_xy) +
                                 d_.beta_x.row(T).dot(x) + sigma_e_ * s.normal();
    }
    return out;
  }

 private:
  static PanelData skeleton(const PanelData& panel, Index n1) {
    PanelData m;
    m.t_pre = panel.t_pre;
    m.z.assign(static_cast<std::size_t>(2 * n1), 0);
    std::fill(m.z.begin(), m.z.begin() + n1, std::uint8_t{1});
    m.y.resize(2 * n1, panel.y.cols());
    m.x.resize(2 * n1, panel.x.cols());
    m.theta = Matrix(2 * n1, panel.theta->cols());
    m.y.topRows(n1) = panel.y.topRows(n1);
    m.x.topRows(n1) = panel.x.topRows(n1);
    m.theta->topRows(n1) = panel.theta->topRows(n1);
    return m;
  }

  DgpParams d_;
  Matrix proj_;          // Sigma_theta_x Sigma_xx^{-1}
  Matrix tilde_factor_;  // factor of Sigma_theta~theta~
  Matrix gain_;          // Sigma~ B' (B Sigma~ B' + Sigma_eps)^{-1}
  Matrix post_factor_;   // factor of (I - r) Sigma~
  double sigma_e_ = 1.0;
};

}  // namespace mdid
