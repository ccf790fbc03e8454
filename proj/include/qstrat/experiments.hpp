#pragma once

// Reproducible experiment drivers shared by the command-line tool and the acceptance runner.

#include "qstrat/reifenberg.hpp"
#include "qstrat/simons.hpp"
#include "qstrat/stratify.hpp"
#include "qstrat/varifold.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace qs::experiments {

/// Values y(x) with standard errors and the least-squares fit of log y on log x.
struct Series {
  std::vector<double> x, y, se;
  LinearFit fit;
};

inline Series fit_loglog(std::vector<double> x, std::vector<double> y, std::vector<double> se = {}) {
  Series s{std::move(x), std::move(y), std::move(se), {}};
  if (s.se.empty()) s.se.assign(s.x.size(), 0.0);
  std::vector<double> lx, ly;
  for (size_t i = 0; i < s.x.size(); ++i)
    if (s.x[i] > 0 && s.y[i] > 0) {
      lx.push_back(std::log(s.x[i]));
      ly.push_back(std::log(s.y[i]));
    }
  if (lx.size() >= 2) s.fit = fit_line(lx, ly);
  return s;
}

inline std::vector<double> dyadic(int from, int to) {
  std::vector<double> r;
  for (int a = from; a <= to; ++a) r.push_back(std::ldexp(1.0, -a));
  return r;
}

/// Vertex, points along an axis ray and a few generic cone points of the Simons cone.
inline std::vector<Point> simons_samples() {
  std::vector<Point> s{Point::Zero(8)};
  for (int j = 0; j <= 40; ++j) s.push_back(SimonsCone::axis_point(std::pow(2.0, -j / 4.0)));
  Vec u = Vec::Zero(4), w = Vec::Zero(4);
  u << 0.5, -0.5, 0.5, 0.5;
  w << 0, 0.6, 0, 0.8;
  for (double rho : {0.05, 0.3, 0.7}) s.push_back(SimonsCone::cone_point(rho, u, w));
  return s;
}

// ---------------------------------------------------------------------------------------------
// Simons cone

struct SimonsOptions {
  double eps = 0.05;
  double quadrature_h = 0.01;
  size_t tube_samples = 40000;
  uint64_t seed = 1;
};

struct SimonsSuite {
  Series mass;         // mu(B_r(0)) over r = 2^-1 .. 2^-5
  Series density;      // theta_r(0) on the same radii
  double density_spread = 0;  // (max - min) / min of theta_r(0)
  Series tube;         // Vol B_r(S^0_{eps,r}) over r = 2^-3 .. 2^-7
  std::vector<size_t> stratum_sizes;
  Series weak;         // mu{r_I < r} over r = 2^-3 .. 2^-7
  std::vector<double> cutoffs;        // 1e-1 .. 1e-4
  std::vector<double> l7;             // closed-form int |A|^7 over B_1 minus B_eps
  LinearFit l7_fit;                   // against ln(1/eps)
  std::vector<double> l65_cutoffs;    // 1e-1 .. 1e-8
  std::vector<double> l65;
  double l65_limit = 0;
  bool l65_cauchy = false;            // increments shrink geometrically
  double quadrature_error_7 = 0, quadrature_error_65 = 0;  // relative, at cutoff 0.01
};

inline SimonsSuite simons_suite(const SimonsOptions& opt = {}) {
  const SimonsCone sc(opt.quadrature_h);
  SimonsSuite out;
  const Point o = Point::Zero(8);

  const auto radii = dyadic(1, 5);
  std::vector<double> m, th;
  for (double r : radii) m.push_back(sc.mass(o, r));
  out.mass = fit_loglog(radii, m);
  th = density_curve(sc, o, radii).theta;
  out.density = fit_loglog(radii, th);
  const auto [lo, hi] = std::minmax_element(th.begin(), th.end());
  out.density_spread = (*hi - *lo) / *lo;

  const auto samples = simons_samples();
  const auto tube_r = dyadic(3, 7);
  std::vector<double> vol, se;
  for (double r : tube_r) {
    std::vector<Point> s0;
    for (const auto& lab : stratify_samples(sc, samples, opt.eps, r))
      if (lab.in_stratum(0)) s0.push_back(lab.x);
    out.stratum_sizes.push_back(s0.size());
    const Estimate e = s0.empty() ? Estimate{} : tube_volume(s0, r, std::nullopt, opt.tube_samples, opt.seed);
    vol.push_back(e.value);
    se.push_back(e.se);
  }
  out.tube = fit_loglog(tube_r, vol, se);

  const auto wt = weak_Lp_curve(sc, WeakQuantity::kInverseRegularity, tube_r);
  out.weak = fit_loglog(wt.r, wt.mass);

  std::vector<double> lx;
  for (int e = 1; e <= 4; ++e) {
    const double c = std::pow(10.0, -e);
    out.cutoffs.push_back(c);
    out.l7.push_back(simons::curvature_integral(7, c));
    lx.push_back(std::log(1 / c));
  }
  out.l7_fit = fit_line(lx, out.l7);

  for (int e = 1; e <= 8; ++e) {
    const double c = std::pow(10.0, -e);
    out.l65_cutoffs.push_back(c);
    out.l65.push_back(simons::curvature_integral(6.5, c));
  }
  out.l65_limit = SimonsCone::link_area() * std::pow(6.0, 3.25) / 0.5;
  out.l65_cauchy = true;
  for (size_t i = 2; i < out.l65.size(); ++i) {
    const double d1 = out.l65[i - 1] - out.l65[i - 2], d2 = out.l65[i] - out.l65[i - 1];
    if (!(d2 > 0 && d2 < d1)) out.l65_cauchy = false;
  }
  auto rel = [&](double p) {
    const double exact = simons::curvature_integral(p, 0.01);
    return std::abs(simons::curvature_integral_quadrature(sc, p, 0.01) - exact) / exact;
  };
  out.quadrature_error_7 = rel(7.0);
  out.quadrature_error_65 = rel(6.5);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Snowflake curves

inline BallSystem snowflake_balls(const std::vector<double>& eta, int depth) {
  std::vector<Point> pts;
  for (const auto& v : gen::snowflake_polyline(eta, depth)) pts.push_back(Vec(v));
  return ball_system_from_points(1, pts);
}

struct SnowflakeSeries {
  std::vector<double> eta;
  std::vector<int> depths;       // lengths at 0..max_length_depth
  std::vector<double> length;
  std::vector<int> dini_depths;  // Dini sums and packing sums at 2..max_dini_depth
  std::vector<double> dini, packing;
};

/// Length by the closed recursion, and the top-ball Dini sum and packing sum of the ball system
/// sampled from the depth-d polyline.
inline SnowflakeSeries snowflake_series(const std::vector<double>& eta, int max_length_depth, int max_dini_depth) {
  SnowflakeSeries s;
  s.eta = eta;
  for (int d = 0; d <= max_length_depth; ++d) {
    s.depths.push_back(d);
    s.length.push_back(gen::snowflake_length(eta, d));
  }
  Point c(2);
  c << 0.5, 0;
  for (int d = 2; d <= max_dini_depth; ++d) {
    const auto b = snowflake_balls(eta, d);
    s.dini_depths.push_back(d);
    s.dini.push_back(dini_sum(b.measure(), c, 1.0, 1));
    s.packing.push_back(packing_verdict(b).sum_rk);
  }
  return s;
}

// ---------------------------------------------------------------------------------------------
// Lipschitz graphs

inline std::vector<Point> sine_curve(double a, int half) {
  std::vector<Point> p;
  for (int i = -half; i <= half; ++i) {
    const double x = static_cast<double>(i) / half;
    p.push_back(Vec(Eigen::Vector2d(x, a * std::sin(2 * kPi * x))));
  }
  return p;
}

/// Grid points over the unit disc (slightly enlarged) on the graph of a sin(2 pi x) sin(2 pi y).
inline std::vector<Point> sine_surface(double a, int half) {
  std::vector<Point> p;
  for (int i = -half; i <= half; ++i)
    for (int j = -half; j <= half; ++j) {
      const double x = static_cast<double>(i) / half, y = static_cast<double>(j) / half;
      if (x * x + y * y > 1.05) continue;
      p.push_back(Vec(Eigen::Vector3d(x, y, a * std::sin(2 * kPi * x) * std::sin(2 * kPi * y))));
    }
  return p;
}

// ---------------------------------------------------------------------------------------------
// Squash sweep

struct SquashSweep {
  std::vector<double> delta;       // delta = delta' = t
  std::vector<double> distortion;  // distortion - 1
  std::vector<double> input_seminorm, output_seminorm;
  LinearFit fit;                   // log(distortion - 1) against log(delta + delta')
};

/// One squash step of a sine graph over the e1 axis through sigma maps with centres every r and
/// planes tilted by t (alternating in sign if requested), the graph having seminorm t.
inline SquashResult squash_probe(double delta, double delta_prime, bool alternate, double r = 0.1) {
  std::vector<Point> c, a;
  std::vector<LinearSubspace> pl;
  for (int i = -8; i <= 8; ++i) {
    c.push_back(Vec(Eigen::Vector2d(i * r, 0)));
    a.push_back(c.back());
    const double ang = alternate && i % 2 ? -delta : delta;
    pl.push_back(LinearSubspace::span(Vec(Eigen::Vector2d(std::cos(ang), std::sin(ang)))));
  }
  const SigmaMap sigma(c, a, pl, r);
  const double amp = delta_prime * r / (1 + kPi / 2);
  const auto g = GraphPatch::sample(LinearSubspace::coordinate(2, {0}), Point::Zero(2), 0.5, 200, [&](const Vec& u) {
    return Vec(Eigen::Vector2d(0, amp * std::sin(2 * kPi * u(0) / (4 * r))));
  });
  return squash_step(g, sigma, 0.25);
}

inline SquashSweep squash_sweep(bool alternate, const std::vector<double>& ts = {0.04, 0.02, 0.01, 0.005}) {
  SquashSweep s;
  std::vector<double> lx, ly;
  for (double t : ts) {
    const auto res = squash_probe(t, t, alternate);
    if (!res.converged) throw NumericalFailure("squash_sweep: inverse iteration did not converge");
    s.delta.push_back(t);
    s.distortion.push_back(res.distortion - 1);
    s.input_seminorm.push_back(res.input_seminorm);
    s.output_seminorm.push_back(res.output_seminorm);
    if (res.distortion > 1) {
      lx.push_back(std::log(2 * t));
      ly.push_back(std::log(res.distortion - 1));
    }
  }
  if (lx.size() >= 2) s.fit = fit_line(lx, ly);
  return s;
}

}  // namespace qs::experiments
