#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdid/error.hpp"
#include "mdid/linalg.hpp"

namespace mdid {

/// A balanced panel: one row per unit, periods 0..T where T is the single
/// post-treatment period.
struct PanelData {
  std::vector<std::string> unit_ids;
  std::vector<std::uint8_t> z;  // treatment flag per unit
  Matrix y;                     // n x (T+1) outcomes
  Matrix x;                     // n x p time-invariant covariates
  Index t_pre = 1;              // T
  std::optional<Matrix> theta;  // latent draws, synthetic data only

  [[nodiscard]] Index n() const noexcept { return static_cast<Index>(z.size()); }
  [[nodiscard]] Index p() const noexcept { return x.cols(); }
  [[nodiscard]] Index periods() const noexcept { return t_pre + 1; }
  [[nodiscard]] bool treated(Index i) const { return z[static_cast<std::size_t>(i)] != 0; }

  [[nodiscard]] Index n_treated() const noexcept {
    Index k = 0;
    for (auto v : z) k += v != 0 ? 1 : 0;
    return k;
  }
  [[nodiscard]] Index n_control() const noexcept { return n() - n_treated(); }

  [[nodiscard]] std::vector<Index> treated_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < n(); ++i)
      if (treated(i)) out.push_back(i);
    return out;
  }
  [[nodiscard]] std::vector<Index> control_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < n(); ++i)
      if (!treated(i)) out.push_back(i);
    return out;
  }

  /// Mean of the T pre-treatment outcomes of unit i.
  [[nodiscard]] double pre_mean(Index i) const {
    double s = 0.0;
    for (Index t = 0; t < t_pre; ++t) s += y(i, t);
    return s / static_cast<double>(t_pre);
  }

  /// Y_{i,T} minus the pre-period mean.
  [[nodiscard]] double contrast(Index i) const { return y(i, t_pre) - pre_mean(i); }

  /// Shape checks: balanced outcome matrix, consistent row counts, finite values.
  void validate_shape() const {
    if (t_pre < 1) throw ValidationError("panel needs at least one pre-treatment period");
    if (y.rows() != n() || x.rows() != n())
      throw ValidationError("panel row counts disagree with the number of units");
    if (!unit_ids.empty() && static_cast<Index>(unit_ids.size()) != n())
      throw ValidationError("panel unit id count disagrees with the number of units");
    if (y.cols() != periods())
      throw ValidationError("unbalanced panel: outcome matrix must have T+1 columns");
    if (!y.allFinite()) throw ValidationError("panel outcomes must be finite");
    if (!x.allFinite()) throw ValidationError("panel covariates must be finite");
  }

  /// Group-size convention: n1 >= 2 and n0 >= n1.
  void validate_groups() const {
    const Index n1 = n_treated();
    const Index n0 = n_control();
    if (n1 < 2)
      throw ValidationError("panel needs at least 2 treated units (found " + std::to_string(n1) + ")");
    if (n0 < n1)
      throw ValidationError("panel needs at least as many controls as treated units (n0=" +
                            std::to_string(n0) + ", n1=" + std::to_string(n1) + ")");
  }

  friend bool operator==(const PanelData& a, const PanelData& b) {
    auto same = [](const Matrix& u, const Matrix& v) {
      return u.rows() == v.rows() && u.cols() == v.cols() && (u.size() == 0 || u == v);
    };
    if (a.theta.has_value() != b.theta.has_value()) return false;
    if (a.theta && !same(*a.theta, *b.theta)) return false;
    return a.unit_ids == b.unit_ids && a.z == b.z && a.t_pre == b.t_pre && same(a.y, b.y) &&
           same(a.x, b.x);
  }
};

/// New panel whose k-th unit is unit rows[k] of `panel`. Repeated indices are
/// allowed (bootstrap resampling); ids get a "#k" suffix so they stay unique.
inline PanelData select_units(const PanelData& panel, const std::vector<Index>& rows) {
  PanelData out;
  out.t_pre = panel.t_pre;
  const auto m = static_cast<Index>(rows.size());
  out.y.resize(m, panel.y.cols());
  out.x.resize(m, panel.x.cols());
  out.z.resize(rows.size());
  if (panel.theta) out.theta = Matrix(m, panel.theta->cols());
  const bool ids = !panel.unit_ids.empty();
  if (ids) out.unit_ids.resize(rows.size());
  for (Index k = 0; k < m; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    out.y.row(k) = panel.y.row(i);
    out.x.row(k) = panel.x.row(i);
    out.z[static_cast<std::size_t>(k)] = panel.z[static_cast<std::size_t>(i)];
    if (panel.theta) out.theta->row(k) = panel.theta->row(i);
    if (ids) out.unit_ids[static_cast<std::size_t>(k)] = panel.unit_ids[static_cast<std::size_t>(i)] + "#" + std::to_string(k);
  }
  return out;
}

}  // namespace mdid
