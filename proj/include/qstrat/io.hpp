#pragma once

// Report serialization: JSON documents, CSV tables and standalone SVG plots.

#include "qstrat/experiments.hpp"
#include "qstrat/reifenberg.hpp"
#include "qstrat/stratify.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace qs::io {

using Json = nlohmann::json;

inline constexpr int kSchema = 1;

inline Json real(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Every reported number carries an error field: a standard error, or 0 for exact values.
inline Json num(double v, double se = 0) { return Json{{"value", real(v)}, {"se", real(se)}}; }

inline Json nums(const std::vector<double>& v, const std::vector<double>& se = {}) {
  Json a = Json::array();
  for (size_t i = 0; i < v.size(); ++i) a.push_back(num(v[i], i < se.size() ? se[i] : 0.0));
  return a;
}

/// Coordinates are exact inputs: an array value with a zero error.
inline Json point(const Point& p) {
  Json a = Json::array();
  for (Eigen::Index d = 0; d < p.size(); ++d) a.push_back(real(p(d)));
  return Json{{"value", a}, {"se", 0.0}};
}

inline Json fit(const LinearFit& f) {
  return Json{{"slope", num(f.slope, f.slope_se)}, {"intercept", num(f.intercept)}, {"r2", num(f.r2)}};
}

inline Json series(const experiments::Series& s) {
  return Json{{"x", nums(s.x)}, {"y", nums(s.y, s.se)}, {"fit", fit(s.fit)}};
}

inline Json document(const std::string& command, Json body) {
  body["schema"] = kSchema;
  body["command"] = command;
  return body;
}

inline void write_json(std::ostream& os, const Json& j) { os << j.dump(2) << '\n'; }

/// Parses "1/i", "C/i", "i^-P", "C*i^-P", "1/sqrt(i)" or "const:C" into eta_1..eta_depth.
inline std::vector<double> parse_eta_sequence(const std::string& spec, int depth) {
  if (depth < 0) throw InputError("eta sequence: depth must be nonnegative");
  static const std::regex harmonic(R"(^\s*([0-9.eE+-]*)\s*/\s*i\s*$)");
  static const std::regex power(R"(^\s*(?:([0-9.eE+-]+)\s*\*\s*)?i\s*\^\s*\(?\s*(-?[0-9.eE+]+)\s*\)?\s*$)");
  static const std::regex root(R"(^\s*([0-9.eE+-]*)\s*/\s*sqrt\(\s*i\s*\)\s*$)");
  static const std::regex constant(R"(^\s*const\s*:\s*([0-9.eE+-]+)\s*$)");
  auto coef = [&](const std::string& s) { return s.empty() ? 1.0 : detail::parse_double(s, "eta sequence '" + spec + "'"); };
  std::smatch m;
  double c = 1, p = 0;
  if (std::regex_match(spec, m, harmonic)) {
    c = coef(m[1]);
    p = -1;
  } else if (std::regex_match(spec, m, root)) {
    c = coef(m[1]);
    p = -0.5;
  } else if (std::regex_match(spec, m, power)) {
    c = coef(m[1]);
    p = detail::parse_double(m[2], "eta sequence '" + spec + "'");
  } else if (std::regex_match(spec, m, constant)) {
    c = coef(m[1]);
  } else {
    throw InputError("eta sequence: cannot parse '" + spec + "'");
  }
  std::vector<double> eta;
  for (int i = 1; i <= depth; ++i) eta.push_back(c * std::pow(static_cast<double>(i), p));
  for (double e : eta)
    if (!(e >= 0 && e <= 1)) throw InputError("eta sequence '" + spec + "': values must lie in [0, 1]");
  return eta;
}

// ---------------------------------------------------------------------------------------------
// CSV

struct CsvWriter {
  std::ostream& os;
  explicit CsvWriter(std::ostream& o, const std::vector<std::string>& header) : os(o) {
    os << std::setprecision(17);
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
  }
  template <class... T>
  void row(const T&... v) {
    size_t i = 0;
    ((os << (i++ ? "," : "") << v), ...);
    os << '\n';
  }
};

/// Ball file: header x1..xn,radius then one ball per line.
inline BallSystem read_ball_csv(std::istream& in, int k, const std::string& name = "balls") {
  std::string line;
  size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    header = detail::split_csv(line);
    break;
  }
  const std::string head = name + ":" + std::to_string(lineno);
  if (header.size() < 2 || header.back() != "radius") throw InputError(head + ": expected header x1,...,xn,radius");
  const int n = static_cast<int>(header.size()) - 1;
  for (int d = 0; d < n; ++d)
    if (header[static_cast<size_t>(d)] != "x" + std::to_string(d + 1))
      throw InputError(head + ": expected column x" + std::to_string(d + 1));
  std::vector<Point> c;
  std::vector<double> r;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto f = detail::split_csv(line);
    if (f.size() != header.size()) throw InputError(where + ": expected " + std::to_string(header.size()) + " fields");
    Point p(n);
    for (int d = 0; d < n; ++d) p(d) = detail::parse_double(f[static_cast<size_t>(d)], where);
    const double rad = detail::parse_double(f.back(), where);
    if (!(rad > 0)) throw InputError(where + ": radius must be positive");
    c.push_back(p);
    r.push_back(rad);
  }
  if (c.empty()) throw InputError(name + ": no balls");
  if (k < 1 || k >= n) throw InputError(name + ": need 1 <= k < n");
  return BallSystem(k, c, r);
}

inline void write_ball_csv(std::ostream& os, const BallSystem& b) {
  std::vector<std::string> h;
  for (int d = 0; d < b.ambient_dim(); ++d) h.push_back("x" + std::to_string(d + 1));
  h.push_back("radius");
  CsvWriter w(os, h);
  for (size_t s = 0; s < b.size(); ++s) {
    for (int d = 0; d < b.ambient_dim(); ++d) os << b.centers()[s](d) << ',';
    os << b.radii()[s] << '\n';
  }
}

inline void write_polyline_csv(std::ostream& os, const std::vector<Eigen::Vector2d>& p) {
  CsvWriter w(os, {"x1", "x2"});
  for (const auto& v : p) w.row(v(0), v(1));
}

// ---------------------------------------------------------------------------------------------
// SVG

/// Log-log scatter of (x, y) with the fitted line and its slope in the legend.
inline void loglog_svg(std::ostream& os, const std::string& title, const std::vector<double>& x,
                       const std::vector<double>& y, const LinearFit& f, const std::string& xlabel,
                       const std::string& ylabel) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log10(x[i]));
      ly.push_back(std::log10(y[i]));
    }
  const double W = 480, H = 360, L = 70, R = 20, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!lx.empty()) {
    x0 = *std::min_element(lx.begin(), lx.end());
    x1 = *std::max_element(lx.begin(), lx.end());
    y0 = *std::min_element(ly.begin(), ly.end());
    y1 = *std::max_element(ly.begin(), ly.end());
  }
  if (x1 - x0 < 1e-9) x1 = x0 + 1;
  if (y1 - y0 < 1e-9) y1 = y0 + 1;
  const double px = 0.05 * (x1 - x0), py = 0.05 * (y1 - y0);
  x0 -= px, x1 += px, y0 -= py, y1 += py;
  auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
     << title << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double vx = x0 + (x1 - x0) * i / 4, vy = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << sx(vx) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"10\">" << vx << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << sy(vy) + 3 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
       << "font-size=\"10\">" << vy << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">log10 " << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">log10 " << ylabel << "</text>\n";
  if (lx.size() >= 2) {
    // The fit is in natural logs; its slope is unchanged in base 10.
    const double b10 = f.intercept / std::log(10.0);
    os << "<line x1=\"" << sx(x0) << "\" y1=\"" << sy(f.slope * x0 + b10) << "\" x2=\"" << sx(x1) << "\" y2=\""
       << sy(f.slope * x1 + b10) << "\" stroke=\"#c33\" stroke-width=\"1.5\"/>\n";
  }
  for (size_t i = 0; i < lx.size(); ++i)
    os << "<circle cx=\"" << sx(lx[i]) << "\" cy=\"" << sy(ly[i]) << "\" r=\"3.5\" fill=\"#236\"/>\n";
  os << std::setprecision(4) << "<text x=\"" << L + 10 << "\" y=\"" << T + 18
     << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#c33\">slope " << f.slope << " (R2 " << f.r2
     << ")</text>\n";
  os << "</svg>\n";
  os << std::defaultfloat << std::setprecision(6);
}

inline void loglog_svg(std::ostream& os, const std::string& title, const experiments::Series& s,
                       const std::string& xlabel, const std::string& ylabel) {
  loglog_svg(os, title, s.x, s.y, s.fit, xlabel, ylabel);
}

// ---------------------------------------------------------------------------------------------
// Module reports

inline Json hypothesis(const HypothesisReport& r) {
  return Json{{"k", r.k},
              {"delta", num(r.delta)},
              {"gate", num(r.gate)},
              {"balls_tested", r.balls_tested},
              {"balls_gated", r.balls_gated},
              {"worst", num(r.worst)},
              {"worst_center", point(r.worst_ball.center)},
              {"worst_r", num(r.worst_ball.r)},
              {"pass", r.pass}};
}

inline Json packing(const PackingVerdict& v) {
  return Json{{"sum_rk", num(v.sum_rk)},
              {"uniform_bound", num(v.uniform_bound)},
              {"worst_center", point(v.worst_center)},
              {"worst_r", num(v.worst_r)},
              {"ceiling", num(v.ceiling)},
              {"within", v.within}};
}

inline Json trace(const ReifenbergTrace& t) {
  Json levels = Json::array();
  for (const auto& lv : t.levels)
    levels.push_back(Json{{"level", lv.level},
                          {"r", num(lv.r)},
                          {"good", lv.good.size()},
                          {"bad", lv.bad.size()},
                          {"final", lv.final_atoms.size()},
                          {"excess_atoms", lv.excess_atoms.size()},
                          {"excess_mass", num(lv.excess_mass)},
                          {"excess_ratio", num(lv.excess_ratio)},
                          {"volume", num(lv.volume)},
                          {"volume_prime", num(lv.volume_prime)},
                          {"ledger_lhs", num(lv.ledger_lhs)},
                          {"ledger_rhs", num(lv.ledger_rhs)},
                          {"ledger_excess", num(lv.ledger_excess())},
                          {"volume_increment", num(lv.volume_increment)},
                          {"distortion", num(lv.distortion)},
                          {"max_displacement", num(lv.max_displacement)},
                          {"graph_bound", num(lv.graph_bound)},
                          {"off_manifold", lv.off_manifold},
                          {"uncovered", lv.uncovered},
                          {"elements", lv.elements}});
  return Json{{"k", t.k},
              {"center", point(t.center)},
              {"r0", num(t.r0)},
              {"rho", num(t.rho)},
              {"depth", t.depth},
              {"mass", num(t.mass)},
              {"completed", t.completed},
              {"failure", t.failure},
              {"initial_volume", num(t.initial_volume)},
              {"final_volume", num(t.final_volume)},
              {"final_volume_prime", num(t.final_volume_prime)},
              {"bad_final_sum", num(t.bad_final_sum)},
              {"excess_mass", num(t.excess_mass)},
              {"remaining_good", t.remaining_good},
              {"levels", levels}};
}

inline void trace_csv(std::ostream& os, const ReifenbergTrace& t) {
  CsvWriter w(os, {"level", "r", "good", "bad", "final", "volume", "volume_prime", "ledger_lhs", "ledger_rhs",
                   "distortion", "max_displacement", "graph_bound", "excess_mass"});
  for (const auto& lv : t.levels)
    w.row(lv.level, lv.r, lv.good.size(), lv.bad.size(), lv.final_atoms.size(), lv.volume, lv.volume_prime,
          lv.ledger_lhs, lv.ledger_rhs, lv.distortion, lv.max_displacement, lv.graph_bound, lv.excess_mass);
}

/// Members of S^k_{eps,r} among the samples, for k = 0..m-1.
inline Json strata(const std::vector<StratLabel>& labels, int m) {
  Json out = Json::array();
  for (int k = 0; k < m; ++k) {
    Json pts = Json::array();
    for (const auto& lab : labels)
      if (lab.in_stratum(k)) pts.push_back(point(lab.x));
    out.push_back(Json{{"k", k}, {"count", pts.size()}, {"points", pts}});
  }
  return out;
}

inline Json covering(const CoveringTree& t) {
  Json rounds = Json::array();
  for (const auto& r : t.per_round)
    rounds.push_back(Json{{"round", r.round},
                          {"parents", r.parents},
                          {"u_r", r.u_r},
                          {"u_plus", r.u_plus},
                          {"sum_rk", num(r.sum_rk)},
                          {"max_energy", num(r.max_energy)}});
  return Json{{"k", t.k},
              {"eps", num(t.eps)},
              {"eta", num(t.eta)},
              {"r", num(t.r)},
              {"energy", num(t.energy)},
              {"lambda", num(t.lambda)},
              {"round_bound", t.round_bound},
              {"rounds", t.rounds},
              {"terminated", t.terminated},
              {"stratum_samples", t.stratum.size()},
              {"u_r", t.u_r.size()},
              {"u_plus", t.u_plus.size()},
              {"certificates_ok", t.certificates_ok},
              {"covers_stratum", t.covers_stratum},
              {"final_cover", t.final_cover},
              {"per_round", rounds}};
}

inline Json simons(const experiments::SimonsSuite& s) {
  Json sizes = Json::array();
  for (size_t n : s.stratum_sizes) sizes.push_back(n);
  return Json{
      {"slopes",
       {{"mass", num(s.mass.fit.slope, s.mass.fit.slope_se)},
        {"tube", num(s.tube.fit.slope, s.tube.fit.slope_se)},
        {"weakL7", num(s.weak.fit.slope, s.weak.fit.slope_se)},
        {"L7divergence", {{"per_log", num(s.l7_fit.slope, s.l7_fit.slope_se)}, {"r2", num(s.l7_fit.r2)}}}}},
      {"mass", series(s.mass)},
      {"density", series(s.density)},
      {"density_spread", num(s.density_spread)},
      {"tube", series(s.tube)},
      {"stratum_sizes", sizes},
      {"weakL7", series(s.weak)},
      {"L7", {{"cutoff", nums(s.cutoffs)}, {"integral", nums(s.l7)}, {"fit", fit(s.l7_fit)}}},
      {"L6_5",
       {{"cutoff", nums(s.l65_cutoffs)},
        {"integral", nums(s.l65)},
        {"limit", num(s.l65_limit)},
        {"cauchy", s.l65_cauchy}}},
      {"quadrature_relative_error", {{"p7", num(s.quadrature_error_7)}, {"p6_5", num(s.quadrature_error_65)}}}};
}

inline Json snowflake(const experiments::SnowflakeSeries& s) {
  Json d = Json::array(), dd = Json::array();
  for (int v : s.depths) d.push_back(v);
  for (int v : s.dini_depths) dd.push_back(v);
  return Json{{"eta", nums(s.eta)},
              {"depth", d},
              {"length", nums(s.length)},
              {"dini_depth", dd},
              {"dini", nums(s.dini)},
              {"packing_sum", nums(s.packing)}};
}

inline Json squash(const experiments::SquashSweep& s) {
  return Json{{"delta", nums(s.delta)},
              {"distortion_minus_one", nums(s.distortion)},
              {"input_seminorm", nums(s.input_seminorm)},
              {"output_seminorm", nums(s.output_seminorm)},
              {"fit", fit(s.fit)}};
}

/// Runs keyed by name; keys are sorted so the merged document does not depend on argument order.
inline Json merge(const std::vector<std::pair<std::string, Json>>& runs) {
  Json r = Json::object();
  for (const auto& [name, j] : runs) {
    if (r.contains(name)) throw InputError("report: duplicate run name " + name);
    r[name] = j;
  }
  return document("report", Json{{"runs", r}});
}

}  // namespace qs::io
