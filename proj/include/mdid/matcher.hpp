#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/error.hpp"
#include "mdid/linalg.hpp"
#include "mdid/panel.hpp"

namespace mdid {

enum class FeatureSet { covariates_only, covariates_and_preoutcomes };
enum class MatchMethod { exact, nearest_neighbor, caliper };

inline std::string_view to_string(FeatureSet f) noexcept {
  return f == FeatureSet::covariates_only ? "covariates_only" : "covariates_and_preoutcomes";
}

inline std::string_view to_string(MatchMethod m) noexcept {
  switch (m) {
    case MatchMethod::exact: return "exact";
    case MatchMethod::nearest_neighbor: return "nearest_neighbor";
    case MatchMethod::caliper: return "caliper";
  }
  return "nearest_neighbor";
}

inline MatchMethod parse_match_method(std::string_view s) {
  if (s == "exact") return MatchMethod::exact;
  if (s == "nearest_neighbor" || s == "nn") return MatchMethod::nearest_neighbor;
  if (s == "caliper") return MatchMethod::caliper;
  throw ValidationError("unknown match method '" + std::string(s) + "'");
}

struct MatchSpec {
  FeatureSet features = FeatureSet::covariates_only;
  MatchMethod method = MatchMethod::nearest_neighbor;
  double caliper_width = 0.0;
  bool standardize = true;  // z-score features on the pooled sample

  void validate() const {
    if (method == MatchMethod::caliper && !(caliper_width > 0.0))
      throw ValidationError("caliper width must be positive");
  }
};

struct MatchPair {
  Index treated = 0;
  Index control = 0;
  double distance = 0.0;
};

/// Injective treated -> control map with discrepancy diagnostics. Indices are
/// panel rows.
struct MatchAssignment {
  FeatureSet features = FeatureSet::covariates_only;
  std::vector<MatchPair> pairs;
  std::vector<std::uint8_t> m_flags;     // M_i per unit
  std::vector<Index> unmatched_treated;  // caliper drops
  Index n_treated = 0;
  double delta_n = 0.0;  // mean pair distance
  double xi_n = 0.0;     // mean squared pair distance

  [[nodiscard]] Index matched_count() const noexcept { return static_cast<Index>(pairs.size()); }
  [[nodiscard]] double total_distance() const noexcept {
    double s = 0.0;
    for (const auto& pr : pairs) s += pr.distance;
    return s;
  }
};

/// Feature matrix (n x d) for the given feature set, optionally z-scored on
/// the pooled sample. Constant columns are left unscaled.
inline Matrix match_features(const PanelData& panel, const MatchSpec& spec) {
  const Index n = panel.n(), p = panel.p();
  const Index extra = spec.features == FeatureSet::covariates_and_preoutcomes ? panel.t_pre : 0;
  const Index d = p + extra;
  if (d == 0) throw ValidationError("matching feature set is empty");
  Matrix w(n, d);
  if (p > 0) w.leftCols(p) = panel.x;
  if (extra > 0) w.rightCols(extra) = panel.y.leftCols(extra);
  if (spec.standardize && n > 1) {
    for (Index j = 0; j < d; ++j) {
      const double m = w.col(j).mean();
      const double var = (w.col(j).array() - m).square().sum() / static_cast<double>(n - 1);
      const double sd = std::sqrt(var);
      if (sd > 0.0) w.col(j) = (w.col(j).array() - m) / sd;
    }
  }
  return w;
}

namespace detail {

inline void finalize(MatchAssignment& a, Index n_units) {
  a.m_flags.assign(static_cast<std::size_t>(n_units), 0);
  double s = 0.0, s2 = 0.0;
  for (const auto& pr : a.pairs) {
    a.m_flags[static_cast<std::size_t>(pr.control)] = 1;
    s += pr.distance;
    s2 += pr.distance * pr.distance;
  }
  const auto k = static_cast<double>(a.pairs.size());
  a.delta_n = a.pairs.empty() ? 0.0 : s / k;
  a.xi_n = a.pairs.empty() ? 0.0 : s2 / k;
}

}  // namespace detail

/// Greedy sequential matching without replacement: treated units in ascending
/// row order each take the nearest unmatched control (Euclidean distance,
/// ties to the lowest control row).
///  - exact: as nearest_neighbor, but any non-zero pair distance is an error.
///  - caliper: pairs farther than the width are dropped to unmatched_treated
///    and the control stays available.
inline MatchAssignment match(const PanelData& panel, const MatchSpec& spec) {
  spec.validate();
  const auto treated = panel.treated_indices();
  const auto controls = panel.control_indices();
  if (spec.method != MatchMethod::caliper && controls.size() < treated.size())
    throw ValidationError("insufficient controls");
  const Matrix w = match_features(panel, spec);

  MatchAssignment a;
  a.features = spec.features;
  a.n_treated = static_cast<Index>(treated.size());
  std::vector<std::uint8_t> used(controls.size(), 0);
  for (const Index i : treated) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = controls.size();
    for (std::size_t k = 0; k < controls.size(); ++k) {
      if (used[k]) continue;
      const double d2 = (w.row(i) - w.row(controls[k])).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_k = k;
      }
    }
    if (best_k == controls.size()) {
      a.unmatched_treated.push_back(i);
      continue;
    }
    const double dist = std::sqrt(best);
    if (spec.method == MatchMethod::exact && dist > 0.0)
      throw ValidationError("no exact match for treated unit " + std::to_string(i));
    if (spec.method == MatchMethod::caliper && dist > spec.caliper_width) {
      a.unmatched_treated.push_back(i);
      continue;
    }
    used[best_k] = 1;
    a.pairs.push_back({i, controls[best_k], dist});
  }
  detail::finalize(a, panel.n());
  return a;
}

/// Minimum-cost assignment of every row to a distinct column of a rows x cols
/// cost matrix (rows <= cols), by shortest augmenting paths with potentials
/// (Hungarian / Jonker-Volgenant). Returns the column chosen for each row.
inline std::vector<Index> solve_assignment(const Matrix& cost) {
  const Index n = cost.rows(), m = cost.cols();
  if (n > m) throw ValidationError("assignment needs at least as many columns as rows");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Index> owner(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    owner[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), kInf);
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(m + 1), 0);
    do {
      seen[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = owner[static_cast<std::size_t>(j0)];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (seen[ju]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (seen[ju]) {
          u[static_cast<std::size_t>(owner[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (owner[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      owner[static_cast<std::size_t>(j0)] = owner[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> col_of_row(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j) {
    const Index r = owner[static_cast<std::size_t>(j)];
    if (r != 0) col_of_row[static_cast<std::size_t>(r - 1)] = j - 1;
  }
  return col_of_row;
}

/// Assignment minimizing the total pair distance. With a caliper spec, pairs
/// of the optimal assignment that exceed the width are dropped afterwards.
inline MatchAssignment optimal_match(const PanelData& panel, const MatchSpec& spec) {
  spec.validate();
  if (spec.method == MatchMethod::exact)
    throw ValidationError("optimal_match supports nearest_neighbor and caliper specs");
  const auto treated = panel.treated_indices();
  const auto controls = panel.control_indices();
  if (controls.size() < treated.size()) throw ValidationError("insufficient controls");
  const Matrix w = match_features(panel, spec);
  Matrix cost(static_cast<Index>(treated.size()), static_cast<Index>(controls.size()));
  for (Index r = 0; r < cost.rows(); ++r)
    for (Index c = 0; c < cost.cols(); ++c)
      cost(r, c) = (w.row(treated[static_cast<std::size_t>(r)]) - w.row(controls[static_cast<std::size_t>(c)])).norm();
  const auto cols = solve_assignment(cost);

  MatchAssignment a;
  a.features = spec.features;
  a.n_treated = static_cast<Index>(treated.size());
  for (std::size_t r = 0; r < treated.size(); ++r) {
    const Index c = cols[r];
    const double dist = cost(static_cast<Index>(r), c);
    if (spec.method == MatchMethod::caliper && dist > spec.caliper_width) {
      a.unmatched_treated.push_back(treated[r]);
      continue;
    }
    a.pairs.push_back({treated[r], controls[static_cast<std::size_t>(c)], dist});
  }
  detail::finalize(a, panel.n());
  return a;
}

/// Pairs treated row k with control row n1 + k (the layout produced by the
/// ideal-matching sampler). Distances are zero by construction.
inline MatchAssignment identity_assignment(const PanelData& panel, FeatureSet features) {
  const Index n1 = panel.n_treated();
  if (panel.n() != 2 * n1) throw ValidationError("identity assignment needs n0 == n1");
  MatchAssignment a;
  a.features = features;
  a.n_treated = n1;
  a.pairs.reserve(static_cast<std::size_t>(n1));
  for (Index k = 0; k < n1; ++k) {
    if (!panel.treated(k) || panel.treated(n1 + k))
      throw ValidationError("identity assignment needs treated rows first, then controls");
    a.pairs.push_back({k, n1 + k, 0.0});
  }
  detail::finalize(a, panel.n());
  return a;
}

struct DiscrepancyReport {
  double delta_n = 0.0;
  double xi_n = 0.0;
  double delta_n_root_n = 0.0;  // delta_n * sqrt(n)
  double xi_n_n = 0.0;          // xi_n * n
  bool empty = false;           // no pairs: all zeros
};

inline DiscrepancyReport discrepancy_report(const MatchAssignment& a, Index n) {
  DiscrepancyReport r;
  if (a.pairs.empty()) {
    r.empty = true;
    return r;
  }
  r.delta_n = a.delta_n;
  r.xi_n = a.xi_n;
  r.delta_n_root_n = a.delta_n * std::sqrt(static_cast<double>(n));
  r.xi_n_n = a.xi_n * static_cast<double>(n);
  return r;
}

}  // namespace mdid
