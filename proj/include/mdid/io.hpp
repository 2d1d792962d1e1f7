#pragma once

// File formats: long-format panel CSV, flat key = value parameter files and
// match-assignment CSV. Reals are written with 17 significant digits so
// every value reads back bit-for-bit.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdid/dgp.hpp"
#include "mdid/error.hpp"
#include "mdid/matcher.hpp"
#include "mdid/panel.hpp"

namespace mdid::io {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

inline bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Panel CSV: unit_id,time,z,y,x1..xp; one row per (unit, period).

/// Reads a long-format panel. Units keep their order of first appearance;
/// rows may come in any order. Errors cite the 1-based file line.
inline PanelData read_panel(std::istream& in) {
  std::string line;
  long long row = 1;
  if (!std::getline(in, line)) throw ValidationError("row 1: missing header");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = detail::split(line, ',');
  const std::vector<std::string_view> fixed{"unit_id", "time", "z", "y"};
  bool header_ok = header.size() >= fixed.size() && std::equal(fixed.begin(), fixed.end(), header.begin());
  const auto p = header_ok ? static_cast<Index>(header.size() - fixed.size()) : 0;
  for (Index j = 0; header_ok && j < p; ++j)
    header_ok = header[fixed.size() + static_cast<std::size_t>(j)] == "x" + std::to_string(j + 1);
  if (!header_ok) throw ValidationError("row 1: header must be unit_id,time,z,y followed by x1..xp");

  struct Cell {
    std::vector<double> y;  // indexed by time
    std::vector<char> seen;
    std::vector<double> x;
    int z = -1;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Cell> units;
  long long t_max = -1;
  const std::size_t width = fixed.size() + static_cast<std::size_t>(p);
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    const std::string at = "row " + std::to_string(row) + ": ";
    if (f.size() != width)
      throw ValidationError(at + "expected " + std::to_string(width) + " fields, found " + std::to_string(f.size()));
    if (f[0].empty()) throw ValidationError(at + "empty unit_id");
    long long t = 0, z = 0;
    if (!detail::parse_int(f[1], t) || t < 0) throw ValidationError(at + "time must be a non-negative integer");
    if (!detail::parse_int(f[2], z) || (z != 0 && z != 1)) throw ValidationError(at + "z must be 0 or 1");
    double y = 0.0;
    if (!detail::parse_real(f[3], y)) throw ValidationError(at + "y is not a finite real");
    std::vector<double> x(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j)
      if (!detail::parse_real(f[4 + static_cast<std::size_t>(j)], x[static_cast<std::size_t>(j)]))
        throw ValidationError(at + "x" + std::to_string(j + 1) + " is not a finite real");

    const std::string id(f[0]);
    auto [it, inserted] = units.try_emplace(id);
    Cell& c = it->second;
    if (inserted) {
      order.push_back(id);
      c.z = static_cast<int>(z);
      c.x = x;
    } else {
      if (c.z != z) throw ValidationError(at + "z changes within unit " + id);
      if (c.x != x) throw ValidationError(at + "covariates change within unit " + id);
    }
    const auto ti = static_cast<std::size_t>(t);
    if (c.seen.size() <= ti) {
      c.seen.resize(ti + 1, 0);
      c.y.resize(ti + 1, 0.0);
    }
    if (c.seen[ti]) throw ValidationError(at + "duplicate row for unit " + id + ", t=" + std::to_string(t));
    c.seen[ti] = 1;
    c.y[ti] = y;
    t_max = std::max(t_max, t);
  }
  if (order.empty()) throw ValidationError("panel has no data rows");
  if (t_max < 1) throw ValidationError("panel needs at least one pre-treatment period (times 0..T with T >= 1)");

  PanelData out;
  out.t_pre = static_cast<Index>(t_max);
  const auto n = static_cast<Index>(order.size());
  out.y.resize(n, t_max + 1);
  out.x.resize(n, p);
  out.unit_ids = order;
  out.z.resize(order.size());
  for (Index i = 0; i < n; ++i) {
    const Cell& c = units.at(order[static_cast<std::size_t>(i)]);
    for (long long t = 0; t <= t_max; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      if (ti >= c.seen.size() || !c.seen[ti])
        throw ValidationError("unbalanced panel: unit " + order[static_cast<std::size_t>(i)] + " missing t=" +
                              std::to_string(t) + " (every unit needs periods 0.." + std::to_string(t_max) + ")");
      out.y(i, static_cast<Index>(t)) = c.y[ti];
    }
    for (Index j = 0; j < p; ++j) out.x(i, j) = c.x[static_cast<std::size_t>(j)];
    out.z[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c.z);
  }
  out.validate_shape();
  return out;
}

inline PanelData load_panel(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return read_panel(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_panel(const PanelData& panel, std::ostream& out) {
  panel.validate_shape();
  out << "unit_id,time,z,y";
  for (Index j = 0; j < panel.p(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Index i = 0; i < panel.n(); ++i) {
    const std::string id =
        panel.unit_ids.empty() ? "u" + std::to_string(i) : panel.unit_ids[static_cast<std::size_t>(i)];
    for (Index t = 0; t < panel.periods(); ++t) {
      out << id << ',' << t << ',' << (panel.treated(i) ? 1 : 0) << ',' << format_real(panel.y(i, t));
      for (Index j = 0; j < panel.p(); ++j) out << ',' << format_real(panel.x(i, j));
      out << '\n';
    }
  }
}

inline void save_panel(const PanelData& panel, const std::string& path) {
  auto out = detail::open_out(path);
  write_panel(panel, out);
}

inline std::string panel_summary(const PanelData& p) {
  return "n=" + std::to_string(p.n()) + " n1=" + std::to_string(p.n_treated()) + " n0=" +
         std::to_string(p.n_control()) + " T=" + std::to_string(p.t_pre) + " p=" + std::to_string(p.p());
}

// ---------------------------------------------------------------------------
// Parameter files: one `key = value` per line, '#' starts a comment, list
// values are comma-separated and matrices are row-major.

/// Raw key/value view of a parameter file with line numbers.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in) {
    KeyValueFile kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view s = line;
      if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
      s = detail::trim(s);
      if (s.empty()) continue;
      const auto eq = s.find('=');
      if (eq == std::string_view::npos)
        throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key(detail::trim(s.substr(0, eq)));
      if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
      if (kv.entries_.count(key))
        throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
      kv.entries_[key] = {std::string(detail::trim(s.substr(eq + 1))), lineno};
    }
    return kv;
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }

  [[nodiscard]] const std::string& text(const std::string& key) const {
    used_.insert(key);
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ValidationError("config: missing key '" + key + "'");
    return it->second.value;
  }

  [[nodiscard]] std::vector<double> reals(const std::string& key, std::size_t expected) const {
    const std::string& v = text(key);
    std::vector<double> out;
    if (!detail::trim(v).empty()) {
      for (const auto f : detail::split(v, ',')) {
        double d = 0.0;
        if (!detail::parse_real(f, d)) throw error(key, "'" + std::string(f) + "' is not a finite real");
        out.push_back(d);
      }
    }
    if (out.size() != expected)
      throw error(key, "needs " + std::to_string(expected) + " values (found " + std::to_string(out.size()) + ")");
    return out;
  }

  [[nodiscard]] double real(const std::string& key) const { return reals(key, 1)[0]; }

  [[nodiscard]] long long integer(const std::string& key) const {
    long long v = 0;
    if (!detail::parse_int(text(key), v)) throw error(key, "expected an integer");
    return v;
  }

  /// Rejects keys nobody asked for (typos would otherwise be silently ignored).
  void check_all_used() const {
    for (const auto& [key, e] : entries_)
      if (!used_.count(key))
        throw ValidationError("config line " + std::to_string(e.line) + ": unknown key '" + key + "'");
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  [[nodiscard]] ValidationError error(const std::string& key, const std::string& msg) const {
    return ValidationError("config line " + std::to_string(entries_.at(key).line) + ": " + key + " " + msg);
  }

  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

inline DgpParams read_params(std::istream& in) {
  const auto kv = KeyValueFile::parse(in);
  DgpParams d;
  const auto dim = [&](const char* key) {
    const long long v = kv.integer(key);
    if (v < 0) throw ValidationError(std::string("config: ") + key + " must be non-negative");
    return static_cast<Index>(v);
  };
  d.n_units = dim("n_units");
  d.p_treated = kv.real("p_treated");
  d.t_pre = dim("t_pre");
  const Index q = dim("q"), p = dim("p"), rows = d.t_pre + 1;
  const auto u = [](Index v) { return static_cast<std::size_t>(v); };
  const auto matrix = [&](const char* key, Index r, Index c) {
    const auto v = kv.reals(key, u(r * c));
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = v[u(i * c + j)];
    return m;
  };
  const auto vector = [&](const char* key, Index n) -> Vector { return matrix(key, n, 1).col(0); };
  d.beta0 = vector("beta0", rows);
  d.beta_theta = matrix("beta_theta", rows, q);
  d.beta_x = matrix("beta_x", rows, p);
  d.mu_theta0 = vector("mu_theta0", q);
  d.mu_theta1 = vector("mu_theta1", q);
  d.mu_x0 = vector("mu_x0", p);
  d.mu_x1 = vector("mu_x1", p);
  d.sigma_theta_theta = matrix("sigma_theta_theta", q, q);
  d.sigma_xx = matrix("sigma_xx", p, p);
  d.sigma_theta_x = matrix("sigma_theta_x", q, p);
  d.sigma_e2 = kv.real("sigma_e2");
  d.tau = kv.real("tau");
  d.latent_law = kv.has("latent_law") ? parse_latent_law(kv.text("latent_law")) : LatentLaw::gaussian;
  kv.check_all_used();
  return d;
}

inline DgpParams load_params(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return read_params(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_params(const DgpParams& d, std::ostream& out) {
  const auto list = [](const Matrix& m) {
    std::string s;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) s += (s.empty() ? "" : ", ") + format_real(m(i, j));
    return s;
  };
  out << "n_units = " << d.n_units << '\n'
      << "p_treated = " << format_real(d.p_treated) << '\n'
      << "t_pre = " << d.t_pre << '\n'
      << "q = " << d.q() << '\n'
      << "p = " << d.p() << '\n'
      << "beta0 = " << list(d.beta0) << '\n'
      << "beta_theta = " << list(d.beta_theta) << '\n'
      << "beta_x = " << list(d.beta_x) << '\n'
      << "mu_theta0 = " << list(d.mu_theta0) << '\n'
      << "mu_theta1 = " << list(d.mu_theta1) << '\n'
      << "mu_x0 = " << list(d.mu_x0) << '\n'
      << "mu_x1 = " << list(d.mu_x1) << '\n'
      << "sigma_theta_theta = " << list(d.sigma_theta_theta) << '\n'
      << "sigma_xx = " << list(d.sigma_xx) << '\n'
      << "sigma_theta_x = " << list(d.sigma_theta_x) << '\n'
      << "sigma_e2 = " << format_real(d.sigma_e2) << '\n'
      << "tau = " << format_real(d.tau) << '\n'
      << "latent_law = " << to_string(d.latent_law) << '\n';
}

// ---------------------------------------------------------------------------
// Match assignments

inline void write_assignment(const PanelData& panel, const MatchAssignment& a, std::ostream& out) {
  const auto id = [&](Index i) {
    return panel.unit_ids.empty() ? "u" + std::to_string(i) : panel.unit_ids[static_cast<std::size_t>(i)];
  };
  out << "treated_id,control_id,distance\n";
  for (const auto& pr : a.pairs) out << id(pr.treated) << ',' << id(pr.control) << ',' << format_real(pr.distance) << '\n';
}

}  // namespace mdid::io
