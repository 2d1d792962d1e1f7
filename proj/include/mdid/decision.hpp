#pragma once

// Step-by-step choice among the three strategies from plug-in bias,
// variance and MSE, with stratified bootstrap standard errors.
//
// Guideline:
//   1. parallel trends asserted by the analyst -> classic DiD.
//   2. a strict MSE winner (gap to the runner-up above the tolerance) wins.
//   3. otherwise, large samples compare |bias| of the two matched
//      estimators (matching on X is taken to dominate no matching on bias);
//      small samples compare the full variance of classic DiD against
//      matching on X (matching on X and Y^T never has the larger variance).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mdid/error.hpp"
#include "mdid/estimators.hpp"
#include "mdid/linalg.hpp"
#include "mdid/matcher.hpp"
#include "mdid/panel.hpp"
#include "mdid/parallel.hpp"
#include "mdid/plugin.hpp"
#include "mdid/rng.hpp"
#include "mdid/stats.hpp"

namespace mdid {

inline constexpr int kSchemaVersion = 1;

struct GuidelineConfig {
  bool pt_asserted = false;
  double mse_similarity_rel_tol = 0.10;
  Index large_sample_threshold = 1000;  // treated units
  Index bootstrap_reps = 5000;          // 0 disables the bootstrap
  std::uint64_t seed = 0;
  MatchSpec match;  // feature set is overridden per strategy
  int threads = 0;

  void validate() const {
    if (!(mse_similarity_rel_tol > 0.0)) throw ValidationError("mse similarity tolerance must be positive");
    if (large_sample_threshold < 1) throw ValidationError("large-sample threshold must be positive");
    if (bootstrap_reps != 0 && bootstrap_reps < 100)
      throw ValidationError("bootstrap reps must be 0 or at least 100");
    match.validate();
  }
};

// ---------------------------------------------------------------------------
// Point estimates for one panel

struct StrategyPoint {
  double tau_hat = 0.0;
  double bias = 0.0;
  double var_full = 0.0;
  double sv = 0.0;  // sqrt(var_full)
  double mse = 0.0;
  Index used_n = 0;
  Index n_tilde = 0;
};

struct PointReport {
  std::array<StrategyPoint, 3> by_kind{};
  Index n1 = 0, n0 = 0;
  Warnings warnings;

  [[nodiscard]] const StrategyPoint& operator[](EstimatorKind k) const { return by_kind[index_of(k)]; }
  [[nodiscard]] StrategyPoint& operator[](EstimatorKind k) { return by_kind[index_of(k)]; }
};

/// Full pipeline on one panel: matching for both feature sets, the three
/// point estimates and the plug-in moments. Matched sample-size factors use
/// the realized matched count of each strategy.
inline PointReport analyze(const PanelData& panel, const MatchSpec& base, const ConditionGuard& guard = {}) {
  panel.validate_shape();
  PointReport out;
  out.n1 = panel.n_treated();
  out.n0 = panel.n_control();
  MatchSpec sx = base, sxy = base;
  sx.features = FeatureSet::covariates_only;
  sxy.features = FeatureSet::covariates_and_preoutcomes;
  const MatchAssignment ax = match(panel, sx);
  const MatchAssignment axy = match(panel, sxy);
  const PluginReport plug = plugin_report(panel, std::nullopt, guard);
  out.warnings = plug.warnings;

  const std::array<EstimateResult, 3> est{estimate_classic(panel), estimate_matched_x(panel, ax),
                                          estimate_matched_xy(panel, axy)};
  const std::array<Index, 3> n_tilde{out.n0, ax.matched_count(), axy.matched_count()};
  for (const auto k : kAllEstimators) {
    const auto i = index_of(k);
    auto& s = out.by_kind[i];
    const auto& m = plug.by_kind[i];
    s.tau_hat = est[i].tau_hat;
    s.bias = m.bias;
    s.n_tilde = n_tilde[i];
    double factor = m.factor;
    if (k != EstimatorKind::classic_did && s.n_tilde < out.n1) {
      factor = 1.0 / static_cast<double>(out.n1) + 1.0 / static_cast<double>(s.n_tilde);
      out.warnings.push_back(std::string(to_string(k)) + ": matched count below n1: outside model assumptions");
    }
    s.var_full = factor * m.var_core;
    s.sv = std::sqrt(s.var_full);
    s.mse = s.bias * s.bias + s.var_full;
    s.used_n = out.n1 + s.n_tilde;
    for (const auto& w : est[i].warnings) out.warnings.push_back(std::string(to_string(k)) + ": " + w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct StrategySe {
  double tau_hat = 0.0;
  double bias = 0.0;
  double sv = 0.0;
  double mse = 0.0;
};

struct BootstrapResult {
  std::vector<std::optional<PointReport>> replicates;  // nullopt where the pipeline failed
  Index failures = 0;
  std::array<StrategySe, 3> se{};
};

/// Resamples units with replacement within each treatment group (keeping n1
/// and n0) and reruns `analyze` on every replicate. Replicate r draws from
/// the bootstrap stream (seed, r). Fails if more than 1% of replicates fail.
inline BootstrapResult bootstrap_reports(const PanelData& panel, const MatchSpec& base, Index reps,
                                         std::uint64_t seed, int threads = 0, const ConditionGuard& guard = {}) {
  if (reps < 2) throw ValidationError("bootstrap needs at least 2 replicates");
  panel.validate_shape();
  const auto treated = panel.treated_indices();
  const auto controls = panel.control_indices();
  const auto n = static_cast<std::size_t>(reps);
  BootstrapResult out;
  out.replicates.resize(n);
  std::vector<std::string> errors(n);
  parallel_for(n, resolve_threads(threads), [&](std::size_t r) {
    rng::Stream s(seed, rng::StreamTag::bootstrap, r);
    std::vector<Index> rows;
    rows.reserve(treated.size() + controls.size());
    for (std::size_t k = 0; k < treated.size(); ++k) rows.push_back(treated[s.below(treated.size())]);
    for (std::size_t k = 0; k < controls.size(); ++k) rows.push_back(controls[s.below(controls.size())]);
    try {
      out.replicates[r] = analyze(select_units(panel, rows), base, guard);
    } catch (const Error& e) {
      errors[r] = e.what();
    }
  });

  std::string first;
  for (std::size_t r = 0; r < n; ++r) {
    if (out.replicates[r]) continue;
    ++out.failures;
    if (first.empty()) first = "replicate " + std::to_string(r) + ": " + errors[r];
  }
  if (static_cast<double>(out.failures) > 0.01 * static_cast<double>(reps))
    throw NumericalError("bootstrap: " + std::to_string(out.failures) + " of " + std::to_string(reps) +
                         " replicates failed (" + first + ")");
  if (reps - out.failures < 2) throw NumericalError("bootstrap: fewer than 2 successful replicates");

  std::vector<double> col;
  col.reserve(n);
  const auto sd_of = [&](EstimatorKind k, double StrategyPoint::*field) {
    col.clear();
    for (const auto& rep : out.replicates)
      if (rep) col.push_back((*rep)[k].*field);
    return stats::sample_sd(col);
  };
  for (const auto k : kAllEstimators) {
    auto& e = out.se[index_of(k)];
    e.tau_hat = sd_of(k, &StrategyPoint::tau_hat);
    e.bias = sd_of(k, &StrategyPoint::bias);
    e.sv = sd_of(k, &StrategyPoint::sv);
    e.mse = sd_of(k, &StrategyPoint::mse);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Guideline

enum class GuidelineStep { parallel_trends, mse, bias, variance };

inline std::string_view to_string(GuidelineStep s) noexcept {
  switch (s) {
    case GuidelineStep::parallel_trends: return "parallel_trends";
    case GuidelineStep::mse: return "mse";
    case GuidelineStep::bias: return "bias";
    case GuidelineStep::variance: return "variance";
  }
  return "?";
}

inline GuidelineStep parse_guideline_step(std::string_view s) {
  for (auto v : {GuidelineStep::parallel_trends, GuidelineStep::mse, GuidelineStep::bias, GuidelineStep::variance})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown guideline step '" + std::string(s) + "'");
}

struct CriterionInput {
  std::string name;
  double value = 0.0;
  bool operator==(const CriterionInput&) const = default;
};

struct CriterionStep {
  GuidelineStep step = GuidelineStep::parallel_trends;
  std::string rule;
  std::vector<CriterionInput> inputs;
  std::optional<EstimatorKind> selected;  // nullopt: fall through to the next step
  std::vector<std::string> assumptions;

  [[nodiscard]] double input(std::string_view name) const {
    for (const auto& in : inputs)
      if (in.name == name) return in.value;
    throw ValidationError("criterion step '" + std::string(to_string(step)) + "' lacks input '" + std::string(name) +
                          "'");
  }
  bool operator==(const CriterionStep&) const = default;
};

/// Quantities the guideline compares, one entry per strategy.
struct GuidelineInputs {
  std::array<double, 3> bias{};
  std::array<double, 3> var_full{};
  std::array<double, 3> mse{};
  Index n1 = 0;
};

namespace detail {

inline std::string key(std::string_view prefix, EstimatorKind k) {
  return std::string(prefix) + "." + std::string(to_string(k));
}

inline double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

// Each rule reads only the step's recorded inputs, so replay is exact.
inline std::optional<EstimatorKind> apply_rule(const CriterionStep& s) {
  using K = EstimatorKind;
  switch (s.step) {
    case GuidelineStep::parallel_trends:
      return s.input("pt_asserted") != 0.0 ? std::optional<K>(K::classic_did) : std::nullopt;
    case GuidelineStep::mse: {
      std::array<double, 3> m{};
      for (const auto k : kAllEstimators) m[index_of(k)] = s.input(key("mse", k));
      std::array<std::size_t, 3> order{0, 1, 2};
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return m[a] < m[b]; });
      if (relative_gap(m[order[0]], m[order[1]]) > s.input("tolerance")) return kAllEstimators[order[0]];
      return std::nullopt;
    }
    case GuidelineStep::bias:
      return std::abs(s.input(key("bias", K::matched_x_y))) <= std::abs(s.input(key("bias", K::matched_x)))
                 ? K::matched_x_y
                 : K::matched_x;
    case GuidelineStep::variance:
      return s.input(key("var_full", K::classic_did)) < s.input(key("var_full", K::matched_x)) ? K::classic_did
                                                                                                : K::matched_x_y;
  }
  return std::nullopt;
}

}  // namespace detail

/// Runs the guideline and records every applied step with its inputs.
inline std::pair<EstimatorKind, std::vector<CriterionStep>> apply_guideline(const GuidelineInputs& in,
                                                                            const GuidelineConfig& cfg) {
  using K = EstimatorKind;
  std::vector<CriterionStep> path;
  const auto finish = [&](CriterionStep s) {
    s.selected = detail::apply_rule(s);
    path.push_back(std::move(s));
    return path.back().selected;
  };

  CriterionStep pt;
  pt.step = GuidelineStep::parallel_trends;
  pt.rule = "parallel trends asserted -> classic_did";
  pt.inputs = {{"pt_asserted", cfg.pt_asserted ? 1.0 : 0.0}};
  if (auto k = finish(std::move(pt))) return {*k, path};

  CriterionStep mse;
  mse.step = GuidelineStep::mse;
  mse.rule = "smallest MSE wins if its relative gap to the runner-up exceeds the tolerance";
  for (const auto k : kAllEstimators) mse.inputs.push_back({detail::key("mse", k), in.mse[index_of(k)]});
  mse.inputs.push_back({"tolerance", cfg.mse_similarity_rel_tol});
  if (auto k = finish(std::move(mse))) return {*k, path};

  CriterionStep s3;
  if (in.n1 >= cfg.large_sample_threshold) {
    s3.step = GuidelineStep::bias;
    s3.rule = "large sample: smaller |bias| of matched_x and matched_x_y (ties to matched_x_y)";
    s3.assumptions = {"matched_x has no larger |bias| than classic_did (regularity condition)"};
    for (const auto k : {K::matched_x, K::matched_x_y}) s3.inputs.push_back({detail::key("bias", k), in.bias[index_of(k)]});
  } else {
    s3.step = GuidelineStep::variance;
    s3.rule = "small sample: classic_did if its full variance is below matched_x, else matched_x_y";
    s3.assumptions = {"matched_x_y has no larger variance than matched_x"};
    for (const auto k : {K::classic_did, K::matched_x})
      s3.inputs.push_back({detail::key("var_full", k), in.var_full[index_of(k)]});
  }
  s3.inputs.push_back({"n1", static_cast<double>(in.n1)});
  s3.inputs.push_back({"large_sample_threshold", static_cast<double>(cfg.large_sample_threshold)});
  return {*finish(std::move(s3)), path};
}

/// Recomputes every step from its recorded inputs; throws if a recorded
/// selection disagrees. Returns the first selection on the path.
inline EstimatorKind replay_criteria(const std::vector<CriterionStep>& path) {
  if (path.empty()) throw ValidationError("criteria path is empty");
  for (const auto& s : path) {
    const auto k = detail::apply_rule(s);
    if (k != s.selected)
      throw ValidationError("criteria path step '" + std::string(to_string(s.step)) + "' does not replay");
    if (k) return *k;
  }
  throw ValidationError("criteria path ends without a selection");
}

// ---------------------------------------------------------------------------
// Decision

struct TableCell {
  double value = 0.0;
  std::optional<double> se;
  bool operator==(const TableCell&) const = default;
};

struct DecisionTable {
  std::array<TableCell, 3> bias{};
  std::array<TableCell, 3> sv{};
  std::array<TableCell, 3> mse{};
  std::array<Index, 3> used_n{};
  bool operator==(const DecisionTable&) const = default;
};

struct Decision {
  EstimatorKind chosen = EstimatorKind::classic_did;
  std::vector<CriterionStep> criteria_path;
  DecisionTable table;
  std::optional<std::array<TableCell, 3>> tau_hat;
  std::optional<double> bias_corrected_tau;
  Index n1 = 0, n0 = 0;
  Index bootstrap_reps = 0;
  Index bootstrap_failures = 0;
  Warnings warnings;
  bool operator==(const Decision&) const = default;
};

/// Decision from already-estimated table values (e.g. a published table).
/// Full variances are taken as S.V squared. `tau_chosen` is the point
/// estimate of the selected strategy, if known.
inline Decision decide_from_tables(const DecisionTable& table, Index n1, const GuidelineConfig& cfg,
                                   std::optional<double> tau_chosen = std::nullopt) {
  if (!(cfg.mse_similarity_rel_tol > 0.0)) throw ValidationError("mse similarity tolerance must be positive");
  GuidelineInputs in;
  in.n1 = n1;
  for (std::size_t i = 0; i < 3; ++i) {
    in.bias[i] = table.bias[i].value;
    in.var_full[i] = table.sv[i].value * table.sv[i].value;
    in.mse[i] = table.mse[i].value;
  }
  Decision d;
  std::tie(d.chosen, d.criteria_path) = apply_guideline(in, cfg);
  d.table = table;
  d.n1 = n1;
  if (tau_chosen) d.bias_corrected_tau = bias_correct(*tau_chosen, table.bias[index_of(d.chosen)].value);
  return d;
}

inline Decision decide(const PanelData& panel, const GuidelineConfig& cfg, const ConditionGuard& guard = {}) {
  cfg.validate();
  panel.validate_shape();
  const PointReport point = analyze(panel, cfg.match, guard);
  std::optional<BootstrapResult> boot;
  if (cfg.bootstrap_reps > 0)
    boot = bootstrap_reports(panel, cfg.match, cfg.bootstrap_reps, cfg.seed, cfg.threads, guard);

  DecisionTable table;
  std::array<TableCell, 3> tau{};
  GuidelineInputs in;
  in.n1 = point.n1;
  for (const auto k : kAllEstimators) {
    const auto i = index_of(k);
    const auto& s = point.by_kind[i];
    table.bias[i].value = s.bias;
    table.sv[i].value = s.sv;
    table.mse[i].value = s.mse;
    table.used_n[i] = s.used_n;
    tau[i].value = s.tau_hat;
    if (boot) {
      table.bias[i].se = boot->se[i].bias;
      table.sv[i].se = boot->se[i].sv;
      table.mse[i].se = boot->se[i].mse;
      tau[i].se = boot->se[i].tau_hat;
    }
    in.bias[i] = s.bias;
    in.var_full[i] = s.var_full;
    in.mse[i] = s.mse;
  }

  Decision d;
  std::tie(d.chosen, d.criteria_path) = apply_guideline(in, cfg);
  d.table = table;
  d.tau_hat = tau;
  d.bias_corrected_tau = bias_correct(point[d.chosen].tau_hat, point[d.chosen].bias);
  d.n1 = point.n1;
  d.n0 = point.n0;
  d.warnings = point.warnings;
  if (boot) {
    d.bootstrap_reps = cfg.bootstrap_reps;
    d.bootstrap_failures = boot->failures;
    if (boot->failures > 0)
      d.warnings.push_back("bootstrap: " + std::to_string(boot->failures) + " replicates failed and were skipped");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Table rendering

inline constexpr std::array<const char*, 3> kColumnTitles{"No Match", "Match on X", "Match on X and Y^T"};
inline constexpr const char* kCheck = "✓";
inline constexpr const char* kCross = "✗";
inline constexpr const char* kNoSe = "—";

/// Per-strategy label naming the criteria on which it is best (smallest
/// |bias|, S.V or MSE; ties to the lower column).
inline std::array<std::string, 3> match_decision_labels(const DecisionTable& t) {
  const auto argmin = [](const std::array<double, 3>& v) {
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  };
  std::array<double, 3> b{}, s{}, m{};
  for (std::size_t i = 0; i < 3; ++i) {
    b[i] = std::abs(t.bias[i].value);
    s[i] = t.sv[i].value;
    m[i] = t.mse[i].value;
  }
  std::array<std::vector<std::string>, 3> wins;
  wins[argmin(b)].push_back("|Bias|");
  wins[argmin(s)].push_back("Var (S.V)");
  wins[argmin(m)].push_back("MSE");
  std::array<std::string, 3> out;
  for (std::size_t i = 0; i < 3; ++i) {
    if (wins[i].empty()) {
      out[i] = kCross;
      continue;
    }
    out[i] = std::string(kCheck) + " on ";
    for (std::size_t j = 0; j < wins[i].size(); ++j) out[i] += (j ? " & " : "") + wins[i][j];
    out[i] += " criteria";
  }
  return out;
}

namespace detail {

inline std::string fixed5(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5f", v);
  return buf;
}

inline std::string cell_text(const TableCell& c) {
  return fixed5(c.value) + " (" + (c.se ? fixed5(*c.se) : std::string(kNoSe)) + ")";
}

// Display width: UTF-8 code points (every glyph used here is single-width).
inline std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80 ? 1 : 0;
  return w;
}

}  // namespace detail

/// Plain-text comparison table: one row per quantity, one column per
/// strategy, bootstrap SEs in parentheses. Columns are separated by at
/// least three spaces and lines carry no trailing blanks.
inline std::string render_table(const Decision& d) {
  const auto& t = d.table;
  std::vector<std::array<std::string, 4>> rows;
  rows.push_back({"", kColumnTitles[0], kColumnTitles[1], kColumnTitles[2]});
  const auto cells = [](const char* label, const std::array<TableCell, 3>& v) {
    return std::array<std::string, 4>{label, detail::cell_text(v[0]), detail::cell_text(v[1]), detail::cell_text(v[2])};
  };
  rows.push_back(cells("Estimated Bias", t.bias));
  rows.push_back(cells("Estimated S.V", t.sv));
  rows.push_back(cells("Estimated MSE", t.mse));
  rows.push_back({"Used Sample Size", std::to_string(t.used_n[0]), std::to_string(t.used_n[1]),
                  std::to_string(t.used_n[2])});
  const auto labels = match_decision_labels(t);
  rows.push_back({"Match Decision", labels[0], labels[1], labels[2]});
  std::array<std::string, 4> final_row{"Suggested Final Decision", "", "", ""};
  for (const auto k : kAllEstimators) final_row[index_of(k) + 1] = k == d.chosen ? kCheck : kCross;
  rows.push_back(final_row);

  std::array<std::size_t, 4> width{};
  for (const auto& r : rows)
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], detail::display_width(r[c]));
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < 4; ++c) {
      line += r[c];
      if (c < 3) line += std::string(width[c] - detail::display_width(r[c]) + 3, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

struct ParsedTable {
  DecisionTable table;
  std::array<std::string, 3> match_decision;
  EstimatorKind suggested = EstimatorKind::classic_did;
};

/// Inverse of render_table.
inline ParsedTable parse_table(const std::string& text) {
  static const std::regex sep(" {2,}");
  static const std::regex cell_re(R"(^(-?[0-9]+\.[0-9]+) \((.+)\)$)");
  ParsedTable out;
  std::array<bool, 6> seen{};
  std::istringstream in(text);
  std::string line;
  const auto split = [&](const std::string& l) {
    std::vector<std::string> parts;
    std::sregex_token_iterator it(l.begin(), l.end(), sep, -1), end;
    for (; it != end; ++it)
      if (!it->str().empty()) parts.push_back(*it);
    return parts;
  };
  const auto parse_cell = [&](const std::string& s) {
    std::smatch m;
    if (!std::regex_match(s, m, cell_re)) throw ValidationError("table: malformed cell '" + s + "'");
    TableCell c;
    c.value = std::stod(m[1]);
    if (m[2] != kNoSe) c.se = std::stod(m[2]);
    return c;
  };
  const std::array<std::string, 6> labels{"Estimated Bias",   "Estimated S.V",  "Estimated MSE",
                                          "Used Sample Size", "Match Decision", "Suggested Final Decision"};
  while (std::getline(in, line)) {
    const auto parts = split(line);
    if (parts.empty() || parts[0] == kColumnTitles[0]) continue;
    const auto pos = std::find(labels.begin(), labels.end(), parts[0]);
    if (pos == labels.end()) throw ValidationError("table: unknown row '" + parts[0] + "'");
    if (parts.size() != 4) throw ValidationError("table: row '" + parts[0] + "' needs 3 cells");
    const auto row = static_cast<std::size_t>(pos - labels.begin());
    seen[row] = true;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::string& s = parts[c + 1];
      switch (row) {
        case 0: out.table.bias[c] = parse_cell(s); break;
        case 1: out.table.sv[c] = parse_cell(s); break;
        case 2: out.table.mse[c] = parse_cell(s); break;
        case 3: out.table.used_n[c] = std::stoll(s); break;
        case 4: out.match_decision[c] = s; break;
        default:
          if (s == kCheck) out.suggested = kAllEstimators[c];
          else if (s != kCross) throw ValidationError("table: bad decision mark '" + s + "'");
      }
    }
  }
  for (std::size_t r = 0; r < seen.size(); ++r)
    if (!seen[r]) throw ValidationError("table: missing row '" + labels[r] + "'");
  return out;
}

// ---------------------------------------------------------------------------
// JSON

using Json = nlohmann::json;

inline Json to_json(const TableCell& c) {
  return Json{{"value", c.value}, {"se", c.se ? Json(*c.se) : Json(nullptr)}};
}

inline TableCell table_cell_from_json(const Json& j) {
  TableCell c;
  c.value = j.at("value").get<double>();
  if (!j.at("se").is_null()) c.se = j.at("se").get<double>();
  return c;
}

inline Json to_json(const Decision& d) {
  Json path = Json::array();
  for (const auto& s : d.criteria_path) {
    Json inputs = Json::array();
    for (const auto& in : s.inputs) inputs.push_back({{"name", in.name}, {"value", in.value}});
    path.push_back({{"step", to_string(s.step)},
                    {"rule", s.rule},
                    {"inputs", inputs},
                    {"assumptions", s.assumptions},
                    {"selected", s.selected ? Json(to_string(*s.selected)) : Json(nullptr)}});
  }
  Json strategies = Json::object();
  for (const auto k : kAllEstimators) {
    const auto i = index_of(k);
    strategies[std::string(to_string(k))] = {
        {"bias", to_json(d.table.bias[i])},
        {"sv", to_json(d.table.sv[i])},
        {"mse", to_json(d.table.mse[i])},
        {"used_sample_size", d.table.used_n[i]},
        {"tau_hat", d.tau_hat ? to_json((*d.tau_hat)[i]) : Json(nullptr)},
    };
  }
  return Json{{"schema_version", kSchemaVersion},
              {"chosen", to_string(d.chosen)},
              {"criteria_path", path},
              {"strategies", strategies},
              {"bias_corrected_tau", d.bias_corrected_tau ? Json(*d.bias_corrected_tau) : Json(nullptr)},
              {"n1", d.n1},
              {"n0", d.n0},
              {"bootstrap_reps", d.bootstrap_reps},
              {"bootstrap_failures", d.bootstrap_failures},
              {"warnings", d.warnings}};
}

inline void check_schema(const Json& j) {
  if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
    throw ValidationError("unsupported report schema version (expected " + std::to_string(kSchemaVersion) + ")");
}

inline Decision decision_from_json(const Json& j) {
  check_schema(j);
  try {
    Decision d;
    d.chosen = parse_estimator_kind(j.at("chosen").get<std::string>());
    for (const auto& s : j.at("criteria_path")) {
      CriterionStep step;
      step.step = parse_guideline_step(s.at("step").get<std::string>());
      step.rule = s.at("rule").get<std::string>();
      for (const auto& in : s.at("inputs")) step.inputs.push_back({in.at("name"), in.at("value").get<double>()});
      step.assumptions = s.at("assumptions").get<std::vector<std::string>>();
      if (!s.at("selected").is_null()) step.selected = parse_estimator_kind(s.at("selected").get<std::string>());
      d.criteria_path.push_back(std::move(step));
    }
    const auto& st = j.at("strategies");
    bool have_tau = true;
    std::array<TableCell, 3> tau{};
    for (const auto k : kAllEstimators) {
      const auto i = index_of(k);
      const auto& e = st.at(std::string(to_string(k)));
      d.table.bias[i] = table_cell_from_json(e.at("bias"));
      d.table.sv[i] = table_cell_from_json(e.at("sv"));
      d.table.mse[i] = table_cell_from_json(e.at("mse"));
      d.table.used_n[i] = e.at("used_sample_size").get<Index>();
      if (e.at("tau_hat").is_null()) have_tau = false;
      else tau[i] = table_cell_from_json(e.at("tau_hat"));
    }
    if (have_tau) d.tau_hat = tau;
    if (!j.at("bias_corrected_tau").is_null()) d.bias_corrected_tau = j.at("bias_corrected_tau").get<double>();
    d.n1 = j.at("n1").get<Index>();
    d.n0 = j.at("n0").get<Index>();
    d.bootstrap_reps = j.at("bootstrap_reps").get<Index>();
    d.bootstrap_failures = j.at("bootstrap_failures").get<Index>();
    d.warnings = j.at("warnings").get<std::vector<std::string>>();
    return d;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed decision report: ") + e.what());
  }
}

}  // namespace mdid
