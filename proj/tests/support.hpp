#pragma once

// Shared fixtures for the test suites: parameter builders, random admissible
// draws and small hand-built panels.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mdid/dgp.hpp"
#include "mdid/panel.hpp"
#include "mdid/rng.hpp"

namespace mdid::testing {

/// Canonical parameters with unit scales and the given time variations,
/// imbalances and correlation. Period-0 coefficients are 1.
inline CanonicalParams canonical(double d_theta, double d_x, double rho, double imb_theta = 0.0,
                                 double imb_x = 0.0, double sigma_e2 = 1.0, double tau = 0.0) {
  CanonicalParams c;
  c.rho = rho;
  c.beta_theta = {1.0, 1.0 + d_theta};
  c.beta_x = {1.0, 1.0 + d_x};
  c.mu_theta = {0.0, imb_theta};
  c.mu_x = {0.0, imb_x};
  c.sigma_e2 = sigma_e2;
  c.tau = tau;
  return c;
}

inline double uniform_in(rng::Stream& s, double lo, double hi) { return lo + (hi - lo) * s.uniform(); }

/// Random canonical parameter draw with |rho| <= rho_max.
inline CanonicalParams random_canonical(rng::Stream& s, double rho_max = 0.95) {
  CanonicalParams c;
  c.sigma_theta = uniform_in(s, 0.3, 2.0);
  c.sigma_x = uniform_in(s, 0.3, 2.0);
  c.rho = uniform_in(s, -rho_max, rho_max);
  c.beta0 = {uniform_in(s, -1, 1), uniform_in(s, -1, 1)};
  c.beta_theta = {uniform_in(s, -2, 2), uniform_in(s, -2, 2)};
  c.beta_x = {uniform_in(s, -2, 2), uniform_in(s, -2, 2)};
  c.mu_theta = {0.0, uniform_in(s, -1, 1)};
  c.mu_x = {0.0, uniform_in(s, -1, 1)};
  c.sigma_e2 = uniform_in(s, 0.2, 2.0);
  c.tau = uniform_in(s, -1, 1);
  return c;
}

/// Random admissible parameter set with the given dimensions. The joint
/// covariance is A A' / k + 0.3 I for a Gaussian k x k matrix A.
inline DgpParams random_dgp(rng::Stream& s, Index q, Index p, Index T, Index n_units = 1000,
                            double p_treated = 0.5) {
  DgpParams d;
  d.n_units = n_units;
  d.p_treated = p_treated;
  d.t_pre = T;
  const Index k = q + p;
  Matrix a(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) a(i, j) = s.normal();
  const Matrix joint = a * a.transpose() / static_cast<double>(std::max<Index>(k, 1)) +
                       0.3 * Matrix::Identity(k, k);
  d.sigma_theta_theta = joint.topLeftCorner(q, q);
  d.sigma_xx = joint.bottomRightCorner(p, p);
  d.sigma_theta_x = joint.topRightCorner(q, p);
  d.beta0 = Vector(T + 1);
  d.beta_theta = Matrix(T + 1, q);
  d.beta_x = Matrix(T + 1, p);
  for (Index t = 0; t <= T; ++t) {
    d.beta0(t) = uniform_in(s, -1, 1);
    for (Index j = 0; j < q; ++j) d.beta_theta(t, j) = uniform_in(s, 0.2, 1.5);
    for (Index j = 0; j < p; ++j) d.beta_x(t, j) = uniform_in(s, -1, 1);
  }
  d.mu_theta0 = Vector::Zero(q);
  d.mu_x0 = Vector::Zero(p);
  d.mu_theta1 = Vector(q);
  d.mu_x1 = Vector(p);
  for (Index j = 0; j < q; ++j) d.mu_theta1(j) = uniform_in(s, -0.8, 0.8);
  for (Index j = 0; j < p; ++j) d.mu_x1(j) = uniform_in(s, -0.8, 0.8);
  d.sigma_e2 = uniform_in(s, 0.3, 1.5);
  d.tau = uniform_in(s, -1, 1);
  return d;
}

/// Panel from explicit per-unit rows. `x` may be empty (p = 0).
inline PanelData make_panel(const std::vector<std::vector<double>>& y, const std::vector<int>& z,
                            const std::vector<std::vector<double>>& x = {}) {
  PanelData p;
  const auto n = static_cast<Index>(y.size());
  const auto periods = static_cast<Index>(y.front().size());
  const Index cols = x.empty() ? 0 : static_cast<Index>(x.front().size());
  p.t_pre = periods - 1;
  p.y.resize(n, periods);
  p.x.resize(n, cols);
  for (Index i = 0; i < n; ++i) {
    p.unit_ids.push_back("u" + std::to_string(i));
    p.z.push_back(static_cast<std::uint8_t>(z[static_cast<std::size_t>(i)]));
    for (Index t = 0; t < periods; ++t) p.y(i, t) = y[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    for (Index j = 0; j < cols; ++j) p.x(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return p;
}

/// Cross-sectional panel (T = 1, zero outcomes) whose only role is to carry
/// one covariate per unit for matching: treated first, then controls.
inline PanelData covariate_panel(const std::vector<double>& treated_x, const std::vector<double>& control_x) {
  std::vector<std::vector<double>> y, x;
  std::vector<int> z;
  for (double v : treated_x) {
    y.push_back({0.0, 0.0});
    x.push_back({v});
    z.push_back(1);
  }
  for (double v : control_x) {
    y.push_back({0.0, 0.0});
    x.push_back({v});
    z.push_back(0);
  }
  return make_panel(y, z, x);
}

}  // namespace mdid::testing
