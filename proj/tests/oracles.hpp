#pragma once

// Brute-force reference computations used only by tests.

#include "qstrat/geom.hpp"
#include "qstrat/stratify.hpp"
#include "qstrat/varifold.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using qs::Mat;
using qs::Point;
using qs::Vec;

inline qs::LinearSubspace random_subspace(int n, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  Mat m(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) m(i, j) = g(rng);
  return qs::LinearSubspace::span(m);
}

inline Vec random_unit(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v / v.norm();
}

/// Evenly spaced samples of a line through 0 intersected with the unit ball.
inline std::vector<Point> sample_unit_ball_slice(const qs::LinearSubspace& line, int count) {
  std::vector<Point> out;
  for (int i = 0; i < count; ++i) {
    const double t = -1.0 + 2.0 * i / (count - 1);
    out.push_back(t * line.frame().col(0));
  }
  return out;
}

inline double sampled_operator_norm(const Mat& m, int samples, std::mt19937_64& rng) {
  double best = 0;
  for (int s = 0; s < samples; ++s) best = std::max(best, (m * random_unit(static_cast<int>(m.cols()), rng)).norm());
  return best;
}

/// Points on the relative boundary of V cap B1. Distance functions to convex sets are convex, so
/// their maximum over the disc is attained on this boundary.
inline std::vector<Point> sample_affine_ball_boundary(const qs::AffineSubspace& v, int count, std::mt19937_64& rng) {
  const double rho = std::sqrt(std::max(0.0, 1.0 - v.base().squaredNorm()));
  const int k = v.dim();
  std::vector<Point> out;
  if (k == 1) {
    out.push_back(v.base() + rho * v.direction().frame().col(0));
    out.push_back(v.base() - rho * v.direction().frame().col(0));
    return out;
  }
  for (int s = 0; s < count; ++s) out.push_back(v.base() + rho * v.direction().frame() * random_unit(k, rng));
  return out;
}

/// Exact distance from p to the disc V cap B1.
inline double distance_to_affine_ball_slice(const qs::AffineSubspace& w, const Point& p) {
  const double rho = std::sqrt(std::max(0.0, 1.0 - w.base().squaredNorm()));
  Vec u = w.direction().frame().transpose() * (p - w.base());
  if (u.norm() > rho) u *= rho / u.norm();
  return (p - w.base() - w.direction().frame() * u).norm();
}

struct NetMinimum {
  double energy = 0;
  size_t evaluated = 0;
};

/// Weighted mean squared distance of points in R^3 to the best k-plane (k = 1, 2) found by scanning
/// a net of orientations over the hemisphere and refining twice around the best node. For a fixed
/// orientation the optimal offset is the weighted centroid.
inline NetMinimum plane_net_minimum(const std::vector<Point>& pts, const std::vector<double>& w, int k) {
  double m = 0;
  Vec mean = Vec::Zero(3);
  for (size_t i = 0; i < pts.size(); ++i) {
    m += w[i];
    mean += w[i] * pts[i];
  }
  mean /= m;
  auto energy = [&](const Vec& d) {
    double e = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
      const Vec y = pts[i] - mean;
      const double t = y.dot(d);
      e += w[i] * (k == 2 ? t * t : y.squaredNorm() - t * t);
    }
    return e / m;
  };
  NetMinimum out;
  out.energy = 1e300;
  double bt = 0, bp = 0;
  auto scan = [&](double t0, double t1, double p0, double p1, int steps) {
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        const double t = t0 + (t1 - t0) * i / steps, p = p0 + (p1 - p0) * j / steps;
        Vec d(3);
        d << std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t);
        const double e = energy(d);
        ++out.evaluated;
        if (e < out.energy) {
          out.energy = e;
          bt = t;
          bp = p;
        }
      }
  };
  scan(0, qs::kPi / 2, 0, 2 * qs::kPi, 300);
  for (double span : {0.03, 0.001}) scan(bt - span, bt + span, bp - span, bp + span, 100);
  return out;
}

/// mu(B_r(0)) for the Simons cone: link area pi^4/2 times r^7/7.
inline double simons_ball_mass(double r) { return std::pow(qs::kPi, 4) / 14 * std::pow(r, 7); }

/// int over B_1 minus B_eps of |A|^p with |A| = sqrt6/|x| and area element (pi^4/2) rho^6 drho.
inline double simons_curvature_integral(double p, double eps) {
  const double c = std::pow(qs::kPi, 4) / 2 * std::pow(6.0, p / 2);
  if (p == 7) return c * std::log(1 / eps);
  return c * (1 - std::pow(eps, 7 - p)) / (7 - p);
}

/// Length after `depth` steps: each segment becomes two outer thirds and two legs of a tent whose
/// apex sits eta/3 of the segment length above the midpoint.
inline double tent_length(const std::vector<double>& eta, int depth) {
  double len = 1;
  for (int i = 0; i < depth; ++i) len *= 2.0 / 3 + 2 * std::hypot(1.0 / 6, eta[static_cast<size_t>(i)] / 3);
  return len;
}

template <class V>
double sup_density_on(const V& v, const Point& c, double radius, const std::vector<Point>& pts) {
  double best = 0;
  for (const auto& y : pts)
    if ((y - c).norm() <= radius) best = std::max(best, qs::density(v, y, radius));
  return best;
}

/// Groups partition the balls, and two balls of a group with the smaller centre within R times the
/// larger radius have radii in ratio below R^-2.
inline bool groups_property(const std::vector<qs::CoverBall>& balls, const std::vector<std::vector<size_t>>& groups,
                            double big_r) {
  std::vector<int> count(balls.size(), 0);
  for (const auto& g : groups)
    for (size_t a : g) {
      if (a >= balls.size()) return false;
      ++count[a];
    }
  for (int c : count)
    if (c != 1) return false;
  for (const auto& g : groups)
    for (size_t i = 0; i < g.size(); ++i)
      for (size_t j = 0; j < g.size(); ++j) {
        if (i == j) continue;
        const auto& big = balls[g[i]];
        const auto& small = balls[g[j]];
        if (small.radius > big.radius) continue;
        if ((small.center - big.center).norm() < big_r * big.radius && small.radius * big_r * big_r >= big.radius)
          return false;
      }
  return true;
}

}  // namespace oracle
