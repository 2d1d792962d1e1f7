#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdid/decision.hpp"
#include "mdid/dgp.hpp"
#include "mdid/error.hpp"
#include "mdid/estimators.hpp"
#include "mdid/io.hpp"
#include "mdid/matcher.hpp"
#include "mdid/monte_carlo.hpp"
#include "mdid/plugin.hpp"
#include "mdid/theory.hpp"

namespace mdid::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumerical = 2;

inline constexpr double kVerifyVarianceRelTol = 0.05;
inline constexpr double kVerifyBiasSe = 3.0;

// ---------------------------------------------------------------------------
// Reports

inline Json estimate_report(const PanelData& panel, const MatchSpec& base) {
  Json j{{"schema_version", kSchemaVersion},
         {"panel",
          {{"n", panel.n()}, {"n1", panel.n_treated()}, {"n0", panel.n_control()}, {"t_pre", panel.t_pre},
           {"p", panel.p()}}},
         {"match",
          {{"method", to_string(base.method)}, {"standardize", base.standardize},
           {"caliper_width", base.caliper_width}}}};
  Warnings warnings;
  Json est = Json::object();
  std::array<Index, 3> used{panel.n_control(), 0, 0};
  for (const auto k : kAllEstimators) {
    std::optional<MatchAssignment> a;
    if (k != EstimatorKind::classic_did) {
      MatchSpec s = base;
      s.features = required_features(k);
      a = match(panel, s);
    }
    const auto r = estimate(panel, k, a ? &*a : nullptr);
    used[index_of(k)] = r.n0_or_ntilde;
    est[std::string(to_string(k))] = {{"tau_hat", r.tau_hat},
                                      {"n1", r.n1},
                                      {"n0_or_ntilde", r.n0_or_ntilde},
                                      {"warnings", r.warnings}};
  }
  j["estimates"] = est;

  try {
    const auto plug = plugin_report(panel);
    Json pj = Json::object();
    for (const auto k : kAllEstimators) {
      auto m = plug[k];
      if (k != EstimatorKind::classic_did && used[index_of(k)] < plug.n1) {
        m.factor = 1.0 / static_cast<double>(plug.n1) + 1.0 / static_cast<double>(used[index_of(k)]);
        m.var_full = m.factor * m.var_core;
        m.mse = m.bias * m.bias + m.var_full;
      }
      pj[std::string(to_string(k))] = {{"bias", m.bias},
                                       {"var_core", m.var_core},
                                       {"factor", m.factor},
                                       {"var_full", m.var_full},
                                       {"mse", m.mse}};
    }
    j["plugin"] = pj;
    for (const auto& w : plug.warnings) warnings.push_back(w);
  } catch (const Error& e) {
    j["plugin"] = nullptr;
    warnings.push_back(std::string("plug-in moments unavailable: ") + e.what());
  }

  j["reliability_hat"] = nullptr;
  if (panel.t_pre >= 2) {
    try {
      const auto r = estimate_reliability(panel);
      j["reliability_hat"] = {{"r_hat", r.r_hat}, {"sigma_e2_hat", r.sigma_e2_hat}};
      for (const auto& w : r.warnings) warnings.push_back(w);
    } catch (const Error& e) {
      warnings.push_back(std::string("reliability estimate unavailable: ") + e.what());
    }
  }
  j["warnings"] = warnings;
  return j;
}

struct VerifyRow {
  std::string quantity;
  double theory = 0.0;
  double mc = 0.0;
  double mc_se = 0.0;
  bool variance = true;  // relative tolerance; otherwise MC-SE multiple
  bool pass = false;
};

struct VerifyResult {
  std::vector<VerifyRow> rows;
  Index n1 = 0, n0 = 0, reps = 0;
  std::uint64_t seed = 0;
  [[nodiscard]] bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return true;
  }
};

/// Theory against Monte Carlo with ideal 1:1 matching: full variances within
/// 5% relative error, biases within 3 Monte Carlo standard errors.
inline VerifyResult verify(const DgpParams& d, Index n1, Index n0, Index reps, std::uint64_t seed, int threads) {
  const auto theory = moments_generalized(d, n1, n0);
  const auto mc = run_monte_carlo(d, reps, n1, n0, seed, resolve_threads(threads));
  VerifyResult out;
  out.n1 = n1;
  out.n0 = n0;
  out.reps = reps;
  out.seed = seed;
  const std::array<const char*, 3> vnames{"v_did", "v_didx", "v_didxy"};
  const std::array<const char*, 3> bnames{"b_did", "b_didx", "b_didxy"};
  for (const auto k : kAllEstimators) {
    const auto i = index_of(k);
    VerifyRow v{vnames[i], theory[k].var_full, mc[k].variance, mc[k].mc_se_variance, true, false};
    v.pass = std::abs(v.mc - v.theory) <= kVerifyVarianceRelTol * std::abs(v.theory);
    out.rows.push_back(v);
  }
  for (const auto k : kAllEstimators) {
    const auto i = index_of(k);
    VerifyRow b{bnames[i], theory[k].bias, mc[k].bias, mc[k].mc_se_mean, false, false};
    b.pass = std::abs(b.mc - b.theory) <= kVerifyBiasSe * b.mc_se;
    out.rows.push_back(b);
  }
  return out;
}

inline std::string render_verify(const VerifyResult& v) {
  std::string out;
  char buf[256];
  for (const auto& r : v.rows) {
    std::snprintf(buf, sizeof buf, "%-8s theory %.6f | MC %.6f ± %.6f | %s | %s\n", r.quantity.c_str(), r.theory,
                  r.mc, r.mc_se, r.variance ? "rel 5%" : "3 MC-SE", r.pass ? "PASS" : "FAIL");
    out += buf;
  }
  out += v.all_pass() ? "overall PASS\n" : "overall FAIL\n";
  return out;
}

inline Json to_json(const VerifyResult& v) {
  Json rows = Json::array();
  for (const auto& r : v.rows)
    rows.push_back({{"quantity", r.quantity},
                    {"theory", r.theory},
                    {"mc", r.mc},
                    {"mc_se", r.mc_se},
                    {"tolerance", r.variance ? "relative 0.05" : "3 mc_se"},
                    {"pass", r.pass}});
  return Json{{"schema_version", kSchemaVersion}, {"n1", v.n1},   {"n0", v.n0},           {"reps", v.reps},
              {"seed", v.seed},                   {"rows", rows}, {"all_pass", v.all_pass()}};
}

struct GridAxis {
  double lo = 0.0, hi = 0.0;
  int steps = 1;

  static GridAxis parse(const std::string& s) {
    GridAxis g;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%lf:%lf:%d%c", &g.lo, &g.hi, &g.steps, &tail) != 3 || g.steps < 1 ||
        !std::isfinite(g.lo) || !std::isfinite(g.hi))
      throw ValidationError("grid '" + s + "' must be lo:hi:steps with steps >= 1");
    return g;
  }
  [[nodiscard]] double at(int k) const {
    return steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps - 1);
  }
};

/// Region map of the covariate-matching variance tradeoff over a grid of
/// time variations (delta_theta, delta_x) around a canonical base.
inline void write_tradeoff(const CanonicalParams& base, Index n1, Index n0, const GridAxis& dtheta,
                           const GridAxis& dx, std::ostream& out) {
  out << "delta_theta,delta_x,v_did,v_didx,v_didxy,reliability,lhs,rhs,match_x_better\n";
  for (int a = 0; a < dtheta.steps; ++a) {
    for (int b = 0; b < dx.steps; ++b) {
      CanonicalParams c = base;
      c.beta_theta[1] = c.beta_theta[0] + dtheta.at(a);
      c.beta_x[1] = c.beta_x[0] + dx.at(b);
      const auto v = variance_canonical(c, n1, n0);
      const auto t = variance_tradeoff_conditions(c, n1, n0);
      out << io::format_real(dtheta.at(a)) << ',' << io::format_real(dx.at(b)) << ',' << io::format_real(v.v_did)
          << ',' << io::format_real(v.v_didx) << ',' << io::format_real(v.v_didxy) << ','
          << io::format_real(v.reliability) << ',' << io::format_real(t.lhs) << ',' << io::format_real(t.rhs) << ','
          << (t.match_x_better ? 1 : 0) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Dispatch

namespace detail {

inline void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << text;
}

inline std::pair<Index, Index> default_groups(const DgpParams& d, Index n1, Index n0) {
  if (n1 > 0 && n0 > 0) return {n1, n0};
  const auto t = static_cast<Index>(std::llround(static_cast<double>(d.n_units) * d.p_treated));
  return {t, d.n_units - t};
}

struct MatchOptions {
  std::string method = "nearest_neighbor";
  double caliper = 0.0;
  bool no_standardize = false;

  void add_to(CLI::App* app) {
    app->add_option("--method", method, "matching method: nearest_neighbor, exact or caliper")
        ->capture_default_str();
    app->add_option("--caliper", caliper, "caliper width (method caliper)");
    app->add_flag("--no-standardize", no_standardize, "match on raw rather than z-scored features");
  }
  [[nodiscard]] MatchSpec spec() const {
    MatchSpec s;
    s.method = parse_match_method(method);
    s.caliper_width = caliper;
    s.standardize = !no_standardize;
    s.validate();
    return s;
  }
};

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Matched difference-in-differences: simulation, estimation and strategy choice", "mdid"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mdid 1.0");

  std::uint64_t seed = 1;
  Index dec_reps = 5000, ver_reps = 10000;
  int threads = 0;
  std::string out_path;
  const auto common = [&](CLI::App* s, Index* reps) {
    s->add_option("--seed", seed, "random seed")->capture_default_str();
    if (reps) s->add_option("--reps", *reps, "replicates")->capture_default_str();
    s->add_option("--threads", threads, "worker threads (0: $MDID_THREADS or all cores)");
    s->add_option("--out", out_path, "output file (default stdout)");
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a panel from a parameter file and write it as CSV");
  std::string sim_config;
  Index sim_n1 = 0, sim_n0 = 0;
  sim->add_option("--config", sim_config, "parameter file")->required();
  sim->add_option("--n1", sim_n1, "fixed number of treated units (with --n0)");
  sim->add_option("--n0", sim_n0, "fixed number of control units (with --n1)");
  common(sim, nullptr);

  // estimate
  auto* est = app.add_subcommand("estimate", "three point estimates and plug-in moments as JSON");
  std::string est_panel, est_pairs;
  detail::MatchOptions est_match;
  est->add_option("--panel", est_panel, "panel CSV")->required();
  est->add_option("--pairs-out", est_pairs, "write matched pairs to <prefix>_x.csv and <prefix>_xy.csv");
  est_match.add_to(est);
  common(est, nullptr);

  // decide
  auto* dec = app.add_subcommand("decide", "apply the matching guideline; table to stdout, JSON to --out");
  std::string dec_panel;
  GuidelineConfig gcfg;
  detail::MatchOptions dec_match;
  dec->add_option("--panel", dec_panel, "panel CSV")->required();
  dec->add_flag("--pt-asserted", gcfg.pt_asserted, "parallel trends hold by domain knowledge");
  dec->add_option("--mse-tol", gcfg.mse_similarity_rel_tol, "relative MSE gap treated as similar")
      ->capture_default_str();
  dec->add_option("--large-n", gcfg.large_sample_threshold, "treated units from which the bias criterion applies")
      ->capture_default_str();
  dec_match.add_to(dec);
  common(dec, &dec_reps);

  // verify
  auto* ver = app.add_subcommand("verify", "compare closed-form moments with Monte Carlo");
  std::string ver_config;
  Index ver_n1 = 0, ver_n0 = 0;
  ver->add_option("--config", ver_config, "parameter file")->required();
  ver->add_option("--n1", ver_n1, "treated units (default from the parameter file)");
  ver->add_option("--n0", ver_n0, "control units (default from the parameter file)");
  common(ver, &ver_reps);

  // bias-correct
  auto* bc = app.add_subcommand("bias-correct", "subtract an estimated bias from a point estimate");
  std::optional<double> bc_tau, bc_bias;
  std::string bc_decision, bc_strategy;
  bc->add_option("--tau", bc_tau, "point estimate");
  bc->add_option("--bias", bc_bias, "estimated bias");
  bc->add_option("--decision", bc_decision, "decision JSON written by `decide --out`");
  bc->add_option("--strategy", bc_strategy, "strategy to correct (default: the chosen one)");

  // tradeoff
  auto* tr = app.add_subcommand("tradeoff", "variance tradeoff region over a grid of time variations (CSV)");
  std::string tr_config, tr_dtheta = "0:2:21", tr_dx = "0:2:21";
  Index tr_n1 = 0, tr_n0 = 0;
  tr->add_option("--config", tr_config, "two-period parameter file with q = p = 1")->required();
  tr->add_option("--dtheta", tr_dtheta, "delta_theta grid lo:hi:steps")->capture_default_str();
  tr->add_option("--dx", tr_dx, "delta_x grid lo:hi:steps")->capture_default_str();
  tr->add_option("--n1", tr_n1, "treated units (default from the parameter file)");
  tr->add_option("--n0", tr_n0, "control units (default from the parameter file)");
  tr->add_option("--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitInvalid;
  }

  try {
    if (*sim) {
      const auto d = io::load_params(sim_config);
      const PanelData p = (sim_n1 > 0 || sim_n0 > 0) ? simulate_groups(d, sim_n1, sim_n0, seed) : simulate(d, seed);
      std::ostringstream s;
      io::write_panel(p, s);
      detail::emit(s.str(), out_path, out);
    } else if (*est) {
      const auto panel = io::load_panel(est_panel);
      err << "loaded panel: " << io::panel_summary(panel) << '\n';
      const MatchSpec spec = est_match.spec();
      if (!est_pairs.empty()) {
        for (const auto k : {EstimatorKind::matched_x, EstimatorKind::matched_x_y}) {
          MatchSpec s = spec;
          s.features = required_features(k);
          std::ostringstream csv;
          io::write_assignment(panel, match(panel, s), csv);
          detail::emit(csv.str(), est_pairs + (k == EstimatorKind::matched_x ? "_x.csv" : "_xy.csv"), out);
        }
      }
      detail::emit(estimate_report(panel, spec).dump(2) + "\n", out_path, out);
    } else if (*dec) {
      const auto panel = io::load_panel(dec_panel);
      err << "loaded panel: " << io::panel_summary(panel) << '\n';
      gcfg.bootstrap_reps = dec_reps;
      gcfg.seed = seed;
      gcfg.threads = threads;
      gcfg.match = dec_match.spec();
      const auto d = decide(panel, gcfg);
      out << render_table(d);
      if (d.bias_corrected_tau) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "chosen: %s, bias-corrected estimate %.3f\n",
                      std::string(to_string(d.chosen)).c_str(), *d.bias_corrected_tau);
        out << buf;
      }
      for (const auto& w : d.warnings) err << "warning: " << w << '\n';
      if (!out_path.empty()) detail::emit(to_json(d).dump(2) + "\n", out_path, out);
    } else if (*ver) {
      const auto d = io::load_params(ver_config);
      const auto [n1, n0] = detail::default_groups(d, ver_n1, ver_n0);
      const auto v = verify(d, n1, n0, ver_reps, seed, threads);
      out << render_verify(v);
      if (!out_path.empty()) detail::emit(to_json(v).dump(2) + "\n", out_path, out);
    } else if (*bc) {
      double tau = 0.0, bias = 0.0;
      if (!bc_decision.empty()) {
        std::ifstream f(bc_decision, std::ios::binary);
        if (!f) throw ValidationError("cannot open '" + bc_decision + "'");
        Json j;
        try {
          j = Json::parse(f);
        } catch (const Json::exception& e) {
          throw ValidationError(bc_decision + ": " + e.what());
        }
        const auto d = decision_from_json(j);
        const auto k = bc_strategy.empty() ? d.chosen : parse_estimator_kind(bc_strategy);
        if (!d.tau_hat) throw ValidationError("decision report carries no point estimates");
        tau = (*d.tau_hat)[index_of(k)].value;
        bias = d.table.bias[index_of(k)].value;
      } else {
        if (!bc_tau || !bc_bias) throw ValidationError("bias-correct needs --tau and --bias, or --decision");
        tau = *bc_tau;
        bias = *bc_bias;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f\n", bias_correct(tau, bias));
      out << buf;
    } else if (*tr) {
      const auto d = io::load_params(tr_config);
      const auto c = CanonicalParams::from_dgp(d);
      const auto [n1, n0] = detail::default_groups(d, tr_n1, tr_n0);
      std::ostringstream s;
      write_tradeoff(c, n1, n0, GridAxis::parse(tr_dtheta), GridAxis::parse(tr_dx), s);
      detail::emit(s.str(), out_path, out);
    }
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace mdid::cli
