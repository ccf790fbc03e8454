#pragma once

#include "qstrat/geom.hpp"
#include "qstrat/measure.hpp"
#include "qstrat/parallel.hpp"
#include "qstrat/stratify.hpp"

#include <array>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

namespace qs {

// ---------------------------------------------------------------------------------------------
// Ball systems and the Dini hypothesis

/// Disjoint balls B_{r_s}(x_s) and the induced measure sum omega_k r_s^k delta_{x_s}.
class BallSystem {
 public:
  BallSystem() = default;
  BallSystem(int k, std::vector<Point> centers, std::vector<double> radii)
      : k_(k), centers_(std::move(centers)), radii_(std::move(radii)) {
    if (k_ < 0) throw std::invalid_argument("BallSystem: k must be nonnegative");
    if (centers_.size() != radii_.size()) throw DimensionError("BallSystem: centre and radius counts differ");
    for (size_t s = 0; s < centers_.size(); ++s) {
      require_same_dim(centers_[s].size(), centers_[0].size(), "BallSystem");
      require_finite(centers_[s], "BallSystem");
      if (!(radii_[s] > 0) || !std::isfinite(radii_[s])) throw std::invalid_argument("BallSystem: radii must be positive");
    }
  }

  int k() const { return k_; }
  size_t size() const { return centers_.size(); }
  int ambient_dim() const { return centers_.empty() ? 0 : static_cast<int>(centers_[0].size()); }
  const std::vector<Point>& centers() const { return centers_; }
  const std::vector<double>& radii() const { return radii_; }

  WeightedPointMeasure measure() const {
    std::vector<double> w;
    for (double r : radii_) w.push_back(omega(k_) * std::pow(r, k_));
    return WeightedPointMeasure::from_points(centers_, w);
  }

  /// First pair of overlapping balls, if any. Tangent balls count as disjoint.
  std::optional<std::pair<size_t, size_t>> overlap() const {
    if (centers_.empty()) return std::nullopt;
    const auto index = WeightedPointMeasure::from_points(centers_, std::vector<double>(size(), 1.0));
    const double rmax = *std::max_element(radii_.begin(), radii_.end());
    for (size_t s = 0; s < size(); ++s) {
      std::optional<std::pair<size_t, size_t>> hit;
      index.for_each_in_ball(centers_[s], radii_[s] + rmax, [&](size_t t) {
        if (t <= s || hit) return;
        if ((centers_[s] - centers_[t]).norm() < (radii_[s] + radii_[t]) * (1 - 1e-12)) hit = std::make_pair(s, t);
      });
      if (hit) return hit;
    }
    return std::nullopt;
  }
  bool disjoint() const { return !overlap().has_value(); }

 private:
  int k_ = 0;
  std::vector<Point> centers_;
  std::vector<double> radii_;
};

/// Balls at the given centres with radius fill times the nearest-neighbour distance; disjoint for fill < 1/2.
inline BallSystem ball_system_from_points(int k, const std::vector<Point>& pts, double fill = 0.45) {
  if (!(fill > 0 && fill < 0.5)) throw std::invalid_argument("ball_system_from_points: need 0 < fill < 1/2");
  if (pts.size() < 2) throw std::invalid_argument("ball_system_from_points: need at least two points");
  const auto index = WeightedPointMeasure::from_points(pts, std::vector<double>(pts.size(), 1.0));
  std::vector<double> radii(pts.size());
  parallel_for(pts.size(), [&](size_t s) {
    double nn = std::numeric_limits<double>::infinity();
    for (double probe = 1e-3;; probe *= 4) {
      index.for_each_in_ball(pts[s], probe, [&](size_t t) {
        if (t != s) nn = std::min(nn, (pts[s] - pts[t]).norm());
      });
      if (std::isfinite(nn)) break;
    }
    if (!(nn > 0)) throw std::invalid_argument("ball_system_from_points: repeated point");
    radii[s] = fill * nn;
  });
  return BallSystem(k, pts, radii);
}

struct HypothesisBall {
  Point center;
  double r = 0;
  double mass = 0;
  double dini = 0;  // r^{-k} sum_{r_b <= r/2} int_{B_r(x)} D(y, r_b) dmu(y)
};

struct HypothesisReport {
  int k = 0;
  double delta = 0;
  double gate = 0;
  size_t balls_tested = 0;
  size_t balls_gated = 0;  // balls with mu(B_r(x)) >= gate r^k
  double worst = 0;
  HypothesisBall worst_ball;
  bool pass = true;
  std::vector<HypothesisBall> rows;
};

namespace detail {

// Per atom: D(y, 2^{-b}) for b >= b0, stopping once the ball holds at most k+1 atoms.
inline std::vector<std::vector<double>> dini_tails(const WeightedPointMeasure& mu, int k, double gate, int b0) {
  std::vector<std::vector<double>> tail(mu.size());
  parallel_for(mu.size(), [&](size_t i) {
    std::vector<double> d;
    if (mu.weight(i) > 0) {
      for (int b = b0; b <= 1060; ++b) {
        const double rb = std::ldexp(1.0, -b);
        if (!ball_has_more_than(mu, mu.point(i), rb, static_cast<size_t>(k) + 1)) break;
        d.push_back(displacement(mu, mu.point(i), rb, k, gate));
      }
    }
    for (size_t t = d.size(); t-- > 1;) d[t - 1] += d[t];
    tail[i] = std::move(d);
  });
  return tail;
}

inline int dyadic_index(double r) { return static_cast<int>(std::ceil(-std::log2(r) - 1e-12)); }

}  // namespace detail

/// Evaluates the Dini integral on every gated ball of the net {atoms} x {2^{-j}, j >= j0}; the
/// verdict passes iff the worst value stays below delta^2.
inline HypothesisReport check_hypothesis(const WeightedPointMeasure& mu, int k, double delta, double gate = -1,
                                         double r_max = 1.0) {
  if (!(delta > 0)) throw std::invalid_argument("check_hypothesis: delta must be positive");
  if (!(r_max > 0)) throw std::invalid_argument("check_hypothesis: r_max must be positive");
  HypothesisReport rep;
  rep.k = k;
  rep.delta = delta;
  rep.gate = gate < 0 ? default_gate(k) : gate;
  if (mu.empty()) return rep;
  const int j0 = detail::dyadic_index(r_max);
  const int b0 = j0 + 1;
  const auto tails = detail::dini_tails(mu, k, rep.gate, b0);
  size_t deepest = 0;
  for (const auto& t : tails) deepest = std::max(deepest, t.size());
  const int j_last = b0 + static_cast<int>(deepest);
  for (int j = j0; j <= j_last; ++j) {
    const double r = std::ldexp(1.0, -j);
    const size_t off = static_cast<size_t>(j + 1 - b0);
    std::vector<HypothesisBall> row(mu.size());
    parallel_for(mu.size(), [&](size_t c) {
      HypothesisBall hb{mu.atom(c), r, 0, 0};
      double sum = 0;
      mu.for_each_in_ball(mu.point(c), r, [&](size_t y) {
        hb.mass += mu.weight(y);
        if (off < tails[y].size()) sum += mu.weight(y) * tails[y][off];
      });
      hb.dini = sum / std::pow(r, k);
      row[c] = std::move(hb);
    });
    for (auto& hb : row) {
      ++rep.balls_tested;
      if (!(hb.mass >= rep.gate * std::pow(r, k)) || hb.mass <= 0) continue;
      ++rep.balls_gated;
      if (rep.balls_gated == 1 || hb.dini > rep.worst) {
        rep.worst = hb.dini;
        rep.worst_ball = hb;
      }
      rep.rows.push_back(std::move(hb));
    }
  }
  rep.pass = rep.worst < delta * delta;
  return rep;
}

inline HypothesisReport check_hypothesis(const BallSystem& b, double delta, double gate = -1) {
  if (const auto o = b.overlap())
    throw std::invalid_argument("check_hypothesis: balls " + std::to_string(o->first) + " and " +
                                std::to_string(o->second) + " overlap");
  return check_hypothesis(b.measure(), b.k(), delta, gate);
}

// ---------------------------------------------------------------------------------------------
// Sigma maps

/// x + sum_i lambda_i(x) pi_{V_i^perp}(p_i - x) with smoothstep bumps of support B_{3r}(x_i).
class SigmaMap {
 public:
  SigmaMap() = default;
  SigmaMap(std::vector<Point> centers, std::vector<Point> anchors, std::vector<LinearSubspace> planes, double r)
      : centers_(std::move(centers)), anchors_(std::move(anchors)), planes_(std::move(planes)), r_(r) {
    if (!(r_ > 0)) throw std::invalid_argument("SigmaMap: r must be positive");
    if (centers_.size() != anchors_.size() || centers_.size() != planes_.size())
      throw DimensionError("SigmaMap: centres, anchors and planes must have equal counts");
    if (centers_.empty()) return;
    n_ = static_cast<int>(centers_[0].size());
    for (size_t i = 0; i < centers_.size(); ++i) {
      require_same_dim(centers_[i].size(), n_, "SigmaMap centre");
      require_same_dim(anchors_[i].size(), n_, "SigmaMap anchor");
      require_same_dim(planes_[i].ambient_dim(), n_, "SigmaMap plane");
      if ((anchors_[i] - centers_[i]).norm() > 10 * r_ * (1 + 1e-12))
        throw std::invalid_argument("SigmaMap: anchor " + std::to_string(i) + " is farther than 10r from its centre");
      perp_.push_back(Mat::Identity(n_, n_) - planes_[i].projector());
    }
    index_ = WeightedPointMeasure::from_points(centers_, std::vector<double>(centers_.size(), 1.0));
    for (size_t i = 0; i < centers_.size(); ++i)
      index_.for_each_in_ball(centers_[i], r_ / 5, [&](size_t j) {
        if (j != i && (centers_[i] - centers_[j]).norm() < r_ / 5 * (1 - 1e-12))
          throw std::invalid_argument("SigmaMap: centres " + std::to_string(i) + " and " + std::to_string(j) +
                                      " are closer than r/5");
      });
  }

  double r() const { return r_; }
  size_t size() const { return centers_.size(); }
  const std::vector<Point>& centers() const { return centers_; }
  const std::vector<Point>& anchors() const { return anchors_; }
  const std::vector<LinearSubspace>& planes() const { return planes_; }

  struct Partition {
    std::vector<size_t> index;
    std::vector<double> lambda;
    std::vector<Vec> gradient;
    double psi = 1;  // 1 - sum lambda
  };

  Partition partition(const Point& x, bool gradients = true) const {
    Partition p;
    if (centers_.empty()) return p;
    require_same_dim(x.size(), n_, "SigmaMap");
    std::vector<double> raw;
    std::vector<Vec> draw;
    index_.for_each_in_ball(x, 3 * r_, [&](size_t i) {
      const Vec d = x - centers_[i];
      const double dist = d.norm();
      const double t = std::clamp((3 * r_ - dist) / r_, 0.0, 1.0);
      if (t <= 0) return;
      p.index.push_back(i);
      raw.push_back(t * t * (3 - 2 * t));
      if (gradients) draw.push_back(t < 1 && dist > 0 ? Vec(-6 * t * (1 - t) / r_ * d / dist) : Vec(Vec::Zero(n_)));
    });
    double sum = 0;
    for (double v : raw) sum += v;
    Vec dsum = Vec::Zero(n_);
    if (gradients)
      for (const auto& g : draw) dsum += g;
    const double norm = std::max(sum, 1.0);
    for (size_t a = 0; a < raw.size(); ++a) {
      p.lambda.push_back(raw[a] / norm);
      if (gradients) p.gradient.push_back(sum > 1 ? Vec(draw[a] / sum - raw[a] * dsum / (sum * sum)) : draw[a]);
    }
    p.psi = 1 - std::min(sum, 1.0);
    return p;
  }

  Point operator()(const Point& x) const {
    if (centers_.empty()) return x;
    require_same_dim(x.size(), n_, "SigmaMap");
    Vec acc = Vec::Zero(n_);
    double sum = 0;
    index_.for_each_in_ball(x, 3 * r_, [&](size_t i) {
      const double t = std::clamp((3 * r_ - (x - centers_[i]).norm()) / r_, 0.0, 1.0);
      if (t <= 0) return;
      const double w = t * t * (3 - 2 * t);
      sum += w;
      acc.noalias() += w * (perp_[i] * (anchors_[i] - x));
    });
    return x + acc / std::max(sum, 1.0);
  }

  /// Analytic Jacobian.
  Mat jacobian(const Point& x) const {
    const Eigen::Index n = x.size();
    Mat j = Mat::Identity(n, n);
    const Partition p = partition(x, true);
    for (size_t a = 0; a < p.index.size(); ++a) {
      const size_t i = p.index[a];
      j += (perp_[i] * (anchors_[i] - x)) * p.gradient[a].transpose() - p.lambda[a] * perp_[i];
    }
    return j;
  }

 private:
  std::vector<Point> centers_, anchors_;
  std::vector<LinearSubspace> planes_;
  std::vector<Mat> perp_;
  double r_ = 1;
  int n_ = 0;
  WeightedPointMeasure index_;
};

inline SigmaMap build_sigma(std::vector<Point> centers, std::vector<Point> anchors, std::vector<LinearSubspace> planes,
                            double r) {
  return SigmaMap(std::move(centers), std::move(anchors), std::move(planes), r);
}

// ---------------------------------------------------------------------------------------------
// Graph patches and the squash step

/// g: V -> V^perp sampled on the lattice spacing * Z^k clipped to the disc of the given radius.
class GraphPatch {
 public:
  GraphPatch() = default;

  static GraphPatch sample(const LinearSubspace& plane, const Point& base, double radius, int half_nodes,
                           const std::function<Vec(const Vec&)>& g) {
    GraphPatch p = empty(plane, base, radius, half_nodes);
    const Mat perp = Mat::Identity(p.n_, p.n_) - plane.projector();
    for (size_t q = 0; q < p.values_.size(); ++q) {
      if (!p.valid_[q]) continue;
      const Vec v = g(p.coordinate(q));
      require_same_dim(v.size(), p.n_, "GraphPatch value");
      p.values_[q] = perp * v;
    }
    return p;
  }

  static GraphPatch empty(const LinearSubspace& plane, const Point& base, double radius, int half_nodes) {
    if (!(radius > 0) || half_nodes < 1) throw std::invalid_argument("GraphPatch: bad lattice");
    if (plane.dim() < 1) throw std::invalid_argument("GraphPatch: plane must have positive dimension");
    GraphPatch p;
    p.plane_ = plane;
    p.base_ = base;
    p.radius_ = radius;
    p.half_ = half_nodes;
    p.k_ = plane.dim();
    p.n_ = plane.ambient_dim();
    require_same_dim(base.size(), p.n_, "GraphPatch base");
    size_t total = 1;
    for (int d = 0; d < p.k_; ++d) total *= static_cast<size_t>(2 * half_nodes + 1);
    p.values_.assign(total, Vec::Zero(p.n_));
    p.valid_.assign(total, 0);
    for (size_t q = 0; q < total; ++q) p.valid_[q] = p.coordinate(q).norm() <= radius * (1 + 1e-12);
    return p;
  }

  const LinearSubspace& plane() const { return plane_; }
  const Point& base() const { return base_; }
  double radius() const { return radius_; }
  double spacing() const { return radius_ / half_; }
  int half_nodes() const { return half_; }
  size_t node_count() const { return values_.size(); }
  bool valid(size_t q) const { return valid_[q] != 0; }
  const Vec& value(size_t q) const { return values_[q]; }
  void set(size_t q, const Vec& v) {
    values_[q] = v;
    valid_[q] = 1;
  }
  void invalidate(size_t q) { valid_[q] = 0; }
  size_t valid_count() const { return static_cast<size_t>(std::count(valid_.begin(), valid_.end(), 1)); }

  std::vector<int> multi_index(size_t q) const {
    std::vector<int> a(static_cast<size_t>(k_));
    const size_t side = static_cast<size_t>(2 * half_ + 1);
    for (int d = 0; d < k_; ++d) {
      a[static_cast<size_t>(d)] = static_cast<int>(q % side) - half_;
      q /= side;
    }
    return a;
  }
  std::optional<size_t> node(const std::vector<int>& a) const {
    size_t q = 0, stride = 1;
    const size_t side = static_cast<size_t>(2 * half_ + 1);
    for (int d = 0; d < k_; ++d) {
      const int v = a[static_cast<size_t>(d)];
      if (v < -half_ || v > half_) return std::nullopt;
      q += static_cast<size_t>(v + half_) * stride;
      stride *= side;
    }
    return q;
  }
  Vec coordinate(size_t q) const {
    const auto a = multi_index(q);
    Vec u(k_);
    for (int d = 0; d < k_; ++d) u(d) = spacing() * a[static_cast<size_t>(d)];
    return u;
  }
  /// Ambient point p + u + g(u) of a valid node.
  Point point(size_t q) const { return base_ + plane_.frame() * coordinate(q) + values_[q]; }

  /// Multilinear interpolation; empty when a corner node is invalid or u leaves the lattice.
  std::optional<Vec> interpolate(const Vec& u) const {
    std::vector<int> lo(static_cast<size_t>(k_));
    std::vector<double> f(static_cast<size_t>(k_));
    for (int d = 0; d < k_; ++d) {
      const double t = u(d) / spacing();
      int l = static_cast<int>(std::floor(t));
      if (l == half_) --l;
      if (l < -half_ || l + 1 > half_) return std::nullopt;
      lo[static_cast<size_t>(d)] = l;
      f[static_cast<size_t>(d)] = t - l;
    }
    Vec out = Vec::Zero(n_);
    for (int mask = 0; mask < (1 << k_); ++mask) {
      std::vector<int> a = lo;
      double w = 1;
      for (int d = 0; d < k_; ++d) {
        const bool up = (mask >> d) & 1;
        a[static_cast<size_t>(d)] += up;
        w *= up ? f[static_cast<size_t>(d)] : 1 - f[static_cast<size_t>(d)];
      }
      if (w == 0) continue;
      const auto q = node(a);
      if (!q || !valid_[*q]) return std::nullopt;
      out += w * values_[*q];
    }
    return out;
  }

  /// Lattice derivative of g at a node: central where possible, one-sided at the boundary.
  std::optional<Mat> derivative(size_t q) const {
    Mat dg(n_, k_);
    const auto a = multi_index(q);
    for (int d = 0; d < k_; ++d) {
      auto ap = a, am = a;
      ++ap[static_cast<size_t>(d)];
      --am[static_cast<size_t>(d)];
      const auto qp = node(ap), qm = node(am);
      const bool hp = qp && valid_[*qp], hm = qm && valid_[*qm];
      if (hp && hm) dg.col(d) = (values_[*qp] - values_[*qm]) / (2 * spacing());
      else if (hp) dg.col(d) = (values_[*qp] - values_[q]) / spacing();
      else if (hm) dg.col(d) = (values_[q] - values_[*qm]) / spacing();
      else return std::nullopt;
    }
    return dg;
  }

  double sup_norm() const {
    double s = 0;
    for (size_t q = 0; q < values_.size(); ++q)
      if (valid_[q]) s = std::max(s, values_[q].norm());
    return s;
  }

  /// Largest difference quotient between lattice neighbours.
  double lip_norm() const {
    double s = 0;
    for (size_t q = 0; q < values_.size(); ++q) {
      if (!valid_[q]) continue;
      const auto a = multi_index(q);
      for (int d = 0; d < k_; ++d) {
        auto b = a;
        ++b[static_cast<size_t>(d)];
        const auto qb = node(b);
        if (qb && valid_[*qb]) s = std::max(s, (values_[*qb] - values_[q]).norm() / spacing());
      }
    }
    return s;
  }

  /// r^{-1} |g|_inf + |grad g|_inf, optionally over nodes with |u| <= within only.
  double seminorm(double r, double within = -1) const {
    if (within < 0) return sup_norm() / r + lip_norm();
    GraphPatch c = *this;
    for (size_t q = 0; q < values_.size(); ++q)
      if (coordinate(q).norm() > within * (1 + 1e-12)) c.valid_[q] = 0;
    return c.sup_norm() / r + c.lip_norm();
  }

 private:
  LinearSubspace plane_;
  Point base_;
  double radius_ = 1;
  int half_ = 1;
  int k_ = 1, n_ = 1;
  std::vector<Vec> values_;
  std::vector<char> valid_;
};

struct SquashOptions {
  double damping = 0.9;
  int max_iterations = 200;
  double tolerance = 1e-13;
};

struct SquashResult {
  GraphPatch patch;
  double input_seminorm = 0;
  double output_seminorm = 0;
  double distortion = 1;       // max over nodes of the bi-Lipschitz constant of d sigma on T G
  double pair_distortion = 1;  // the same from neighbouring node pairs
  double max_displacement = 0; // r^{-1} max |sigma(z) - z|
  int iterations = 0;          // worst node
  size_t clipped = 0;          // nodes whose preimage left the input domain
  size_t failed = 0;           // nodes where the fixed point did not converge
  bool converged = true;
};

/// Re-expresses sigma(G) as a graph over the plane of G by inverting the tangential part of sigma.
inline SquashResult squash_step(const GraphPatch& g, const SigmaMap& sigma, double rho, const SquashOptions& opt = {}) {
  if (!(rho > 0 && rho <= 1)) throw std::invalid_argument("squash_step: need 0 < rho <= 1");
  const double r = sigma.r();
  const Mat f = g.plane().frame();
  const Eigen::Index n = f.rows(), k = f.cols();
  const Mat perp = Mat::Identity(n, n) - g.plane().projector();
  SquashResult res;
  res.patch = GraphPatch::empty(g.plane(), g.base(), g.radius(), g.half_nodes());
  res.input_seminorm = g.seminorm(r);
  const size_t nodes = g.node_count();
  std::vector<int> iters(nodes, 0);
  std::vector<char> state(nodes, 0);  // 0 ok, 1 clipped, 2 failed, 3 outside disc
  std::vector<Vec> out(nodes);
  std::vector<double> lip(nodes, 1.0), disp(nodes, 0.0);
  parallel_for(nodes, [&](size_t q) {
    if (!g.valid(q)) {
      state[q] = 3;
      return;
    }
    const Vec u = g.coordinate(q);
    Vec x = u;
    bool done = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      const auto gx = g.interpolate(x);
      if (!gx) {
        state[q] = 1;
        return;
      }
      const Point s = sigma(g.base() + f * x + *gx);
      const Vec t = f.transpose() * (s - g.base());
      const Vec e = t - u;
      iters[q] = it + 1;
      if (e.norm() <= opt.tolerance * std::max(1.0, r)) {
        out[q] = perp * (s - g.base());
        done = true;
        break;
      }
      x -= opt.damping * e;
    }
    if (!done) {
      state[q] = 2;
      return;
    }
    // Distortion of sigma on the input graph at this node.
    const Point z = g.point(q);
    disp[q] = (sigma(z) - z).norm() / r;
    if (const auto dg = g.derivative(q)) {
      const Mat tangent = LinearSubspace::span(f + *dg).frame();
      if (tangent.cols() == k) {
        const Eigen::JacobiSVD<Mat> svd(sigma.jacobian(z) * tangent);
        const Vec sv = svd.singularValues();
        lip[q] = std::max(sv(0), 1.0 / sv(sv.size() - 1));
      }
    }
  });
  for (size_t q = 0; q < nodes; ++q) {
    res.iterations = std::max(res.iterations, iters[q]);
    if (state[q] == 0) {
      res.patch.set(q, out[q]);
      res.distortion = std::max(res.distortion, lip[q]);
      res.max_displacement = std::max(res.max_displacement, disp[q]);
    } else if (state[q] == 1) {
      ++res.clipped;
    } else if (state[q] == 2) {
      ++res.failed;
    }
    if (state[q] != 0) res.patch.invalidate(q);
  }
  for (size_t q = 0; q < nodes; ++q) {
    if (state[q] != 0) continue;
    const auto a = g.multi_index(q);
    for (Eigen::Index d = 0; d < k; ++d) {
      auto b = a;
      ++b[static_cast<size_t>(d)];
      const auto qb = g.node(b);
      if (!qb || state[*qb] != 0) continue;
      const Point za = g.point(q), zb = g.point(*qb);
      const double ratio = (sigma(za) - sigma(zb)).norm() / (za - zb).norm();
      res.pair_distortion = std::max({res.pair_distortion, ratio, 1.0 / ratio});
    }
  }
  res.converged = res.failed == 0;
  res.output_seminorm = res.patch.seminorm(r);
  return res;
}

// ---------------------------------------------------------------------------------------------
// Best planes at two scales, effective spanning, packing

struct DriftCheck {
  double lhs = 0;    // d_H(V(0,1) cap B_rho(x), V(x,rho) cap B_rho(x))^2
  double rhs = 0;    // D(x,rho) + D(0,1)
  double ratio = 0;  // lhs / rhs, 0 when both vanish
};

namespace detail {

// Distance from y to the disc P cap B_rho(x), P affine; the disc is given by centre and radius.
inline double disc_distance(const AffineSubspace& p, const Point& c, double rad, const Point& y) {
  const Point q = p.project(y);
  const Vec t = q - c;
  const double tn = t.norm();
  const Point clamped = tn > rad ? Point(c + t * (rad / tn)) : q;
  return (y - clamped).norm();
}

// Relative boundary of P cap B_rho(x); distances to a convex set peak there.
inline std::vector<Point> disc_boundary(const AffineSubspace& p, const Point& c, double rad, int samples) {
  std::vector<Point> out;
  const Mat& f = p.direction().frame();
  const int k = p.dim();
  if (k == 0) return {c};
  if (k == 1) return {c + rad * f.col(0), c - rad * f.col(0)};
  if (k == 2) {
    for (int s = 0; s < samples; ++s) {
      const double a = 2 * kPi * s / samples;
      out.push_back(c + rad * (std::cos(a) * f.col(0) + std::sin(a) * f.col(1)));
    }
    return out;
  }
  // Higher k: random directions from a fixed seed.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss;
  for (int s = 0; s < samples; ++s) {
    Vec u(k);
    for (int d = 0; d < k; ++d) u(d) = gauss(rng);
    out.push_back(c + rad * f * (u / u.norm()));
  }
  return out;
}

inline std::optional<std::pair<Point, double>> disc_in_ball(const AffineSubspace& p, const Point& x, double rho) {
  const Point c = p.project(x);
  const double d2 = (x - c).squaredNorm();
  if (d2 >= rho * rho) return std::nullopt;
  return std::make_pair(c, std::sqrt(rho * rho - d2));
}

}  // namespace detail

/// Gate of the two-scale comparison: mu(B_1(0)) >= gamma_k, mu(B_rho(x)) >= gamma_k rho^k and
/// d(x, V(0,1)) < rho/2.
inline bool drift_gate(const WeightedPointMeasure& mu, const Point& x, double rho, int k) {
  const Point o = Point::Zero(mu.dim());
  const double g = default_gate(k);
  if (mu.mass_in_ball(o, 1.0) < g || mu.mass_in_ball(x, rho) < g * std::pow(rho, k)) return false;
  return best_plane(mu, o, 1.0, k).plane.distance(x) < rho / 2;
}

inline DriftCheck best_plane_drift_check(const WeightedPointMeasure& mu, const Point& x, double rho, int k,
                                         int boundary_samples = 256) {
  if (!(rho > 0 && rho < 1)) throw std::invalid_argument("best_plane_drift_check: need 0 < rho < 1");
  if (!drift_gate(mu, x, rho, k)) throw std::invalid_argument("best_plane_drift_check: gate failure");
  const Point o = Point::Zero(mu.dim());
  const AffineSubspace a = best_plane(mu, o, 1.0, k).plane;
  const AffineSubspace b = best_plane(mu, x, rho, k).plane;
  const auto da = detail::disc_in_ball(a, x, rho);
  const auto db = detail::disc_in_ball(b, x, rho);
  DriftCheck out;
  double h = 0;
  if (da && db) {
    for (const auto& y : detail::disc_boundary(a, da->first, da->second, boundary_samples))
      h = std::max(h, detail::disc_distance(b, db->first, db->second, y));
    for (const auto& y : detail::disc_boundary(b, db->first, db->second, boundary_samples))
      h = std::max(h, detail::disc_distance(a, da->first, da->second, y));
  }
  out.lhs = h * h;
  out.rhs = displacement(mu, x, rho, k) + displacement(mu, o, 1.0, k);
  out.ratio = out.rhs > 0 ? out.lhs / out.rhs : (out.lhs > 1e-24 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

struct SpanningWitness {
  bool found = false;
  Point x;
  double mass = 0;       // mu(B_rho(x))
  double clearance = 0;  // d(x, V)
  double required = 0;   // (3 gamma_k / 4) 4^{-n} rho^n
};

/// Searches the atoms of B_1(0) at distance >= 10 rho from V for the heaviest rho-ball.
inline SpanningWitness find_spanning_point(const WeightedPointMeasure& mu, const AffineSubspace& v, double rho, int k) {
  if (v.dim() > k - 1) throw std::invalid_argument("find_spanning_point: V must have dimension at most k-1");
  SpanningWitness w;
  const int n = mu.dim();
  w.required = 0.75 * default_gate(k) * std::pow(4.0, -n) * std::pow(rho, n);
  for (size_t i = 0; i < mu.size(); ++i) {
    const Point x = mu.atom(i);
    if (x.norm() > 1.0) continue;
    const double c = v.distance(x);
    if (c < 10 * rho) continue;
    const double m = mu.mass_in_ball(x, rho);
    if (m > w.mass) {
      w.mass = m;
      w.x = x;
      w.clearance = c;
    }
  }
  w.found = w.mass >= w.required && w.mass > 0;
  return w;
}

struct PackingVerdict {
  double sum_rk = 0;         // sum_s r_s^k
  double uniform_bound = 0;  // sup over tested balls of mu(B_r(x)) / r^k
  Point worst_center;
  double worst_r = 0;
  double ceiling = 0;        // 40^k omega_k
  bool within = true;
};

/// Balls of the dyadic net inside a single input ball are skipped, as the bound may fail there
/// for trivial reasons.
inline PackingVerdict packing_verdict(const BallSystem& b) {
  PackingVerdict v;
  const int k = b.k();
  v.ceiling = std::pow(40.0, k) * omega(k);
  if (b.size() == 0) return v;
  for (double r : b.radii()) v.sum_rk += std::pow(r, k);
  const auto mu = b.measure();
  const double rmin = *std::min_element(b.radii().begin(), b.radii().end());
  for (int j = 0; std::ldexp(1.0, -j) >= rmin * (1 - 1e-12); ++j) {
    const double r = std::ldexp(1.0, -j);
    for (size_t s = 0; s < b.size(); ++s) {
      if (r <= b.radii()[s]) continue;
      const double q = mu.mass_in_ball(b.centers()[s], r) / std::pow(r, k);
      if (q > v.uniform_bound) {
        v.uniform_bound = q;
        v.worst_center = b.centers()[s];
        v.worst_r = r;
      }
    }
  }
  v.within = v.uniform_bound <= v.ceiling;
  return v;
}

// ---------------------------------------------------------------------------------------------
// The inductive construction

struct ReifenbergOptions {
  double rho = 0.25;
  int depth = 3;
  double gate = -1;        // negative means gamma_k
  int resolution = 0;      // mesh elements per r_{i+1} near active balls; 0 picks 8 for k = 1, 4 for k = 2
  size_t max_elements = 2000000;
  double max_distortion = 2.0;  // beyond this the step is reported as a hypothesis failure
};

struct LevelTrace {
  int level = 0;
  double r = 0;
  std::vector<Point> good, bad;
  std::vector<size_t> final_atoms;
  std::vector<double> final_radii;
  std::vector<size_t> excess_atoms;
  double excess_mass = 0;
  double excess_ratio = 0;     // max over good balls of mu(E) (r_{i+1}/11)^2 / (r_i^{k+2} D(y, r_i))
  double volume = 0;           // lambda^k(T_i)
  double volume_prime = 0;     // lambda^k(T_i')
  double ledger_lhs = 0;       // lambda^k(sigma_i^{-1}(T_i')) + hole charges
  double ledger_rhs = 0;       // lambda^k(T_{i-1}')
  double volume_increment = 0; // lambda^k(T_i') - lambda^k(sigma_i^{-1}(T_i'))
  double distortion = 1;
  double max_displacement = 0; // max |sigma_i(y) - y| / r_i over T_{i-1}
  double graph_bound = 0;      // max over good balls of r^{-1}|f| + |grad f| for T_i over V(y, r_i)
  size_t off_manifold = 0;     // live atoms farther than r_{i+1}/10 from T_i'
  size_t uncovered = 0;        // atoms that no ball of this level could take
  size_t elements = 0;

  /// Relative violation of the volume recursion, 0 when it holds.
  double ledger_excess() const { return ledger_rhs > 0 ? std::max(0.0, ledger_lhs / ledger_rhs - 1) : 0.0; }
};

struct ReifenbergTrace {
  int k = 0;
  Point center;
  double r0 = 0;
  double rho = 0;
  int depth = 0;
  double mass = 0;  // mu(B_{r0}(center))
  std::vector<LevelTrace> levels;
  bool completed = false;
  std::string failure;
  double initial_volume = 0;
  double final_volume = 0;
  double final_volume_prime = 0;
  double bad_final_sum = 0;  // sum over bad and final balls of r^k
  double excess_mass = 0;
  size_t remaining_good = 0;
};

namespace detail {

// Element of the approximating manifold: a simplex in the parameter plane of T_j and its image.
struct MeshElement {
  std::vector<Vec> u;
  std::vector<Point> x;
  bool alive = true;
};

inline double simplex_volume(const std::vector<Point>& x) {
  const Eigen::Index k = static_cast<Eigen::Index>(x.size()) - 1;
  if (k == 0) return 1.0;
  Mat e(x[0].size(), k);
  for (Eigen::Index a = 0; a < k; ++a) e.col(a) = x[static_cast<size_t>(a) + 1] - x[0];
  const double det = (e.transpose() * e).determinant();
  const double fact = std::tgamma(static_cast<double>(k) + 1);
  return std::sqrt(std::max(0.0, det)) / fact;
}

inline double simplex_diameter(const std::vector<Point>& x) {
  double d = 0;
  for (size_t a = 0; a < x.size(); ++a)
    for (size_t b = a + 1; b < x.size(); ++b) d = std::max(d, (x[a] - x[b]).norm());
  return d;
}

inline Point simplex_centroid(const std::vector<Point>& x) {
  Point c = Point::Zero(x[0].size());
  for (const auto& p : x) c += p;
  return c / static_cast<double>(x.size());
}

inline Point closest_on_segment(const Point& a, const Point& b, const Point& y) {
  const Vec d = b - a;
  const double l2 = d.squaredNorm();
  const double t = l2 > 0 ? std::clamp((y - a).dot(d) / l2, 0.0, 1.0) : 0.0;
  return a + t * d;
}

inline Point closest_on_simplex(const std::vector<Point>& x, const Point& y) {
  if (x.size() == 2) return closest_on_segment(x[0], x[1], y);
  const Vec e1 = x[1] - x[0], e2 = x[2] - x[0], w = y - x[0];
  Eigen::Matrix2d g;
  g << e1.dot(e1), e1.dot(e2), e1.dot(e2), e2.dot(e2);
  const Eigen::Vector2d rhs(e1.dot(w), e2.dot(w));
  const Eigen::Vector2d s = g.ldlt().solve(rhs);
  if (s(0) >= 0 && s(1) >= 0 && s(0) + s(1) <= 1) return x[0] + s(0) * e1 + s(1) * e2;
  Point best = closest_on_segment(x[0], x[1], y);
  for (const auto& c : {closest_on_segment(x[1], x[2], y), closest_on_segment(x[2], x[0], y)})
    if ((c - y).squaredNorm() < (best - y).squaredNorm()) best = c;
  return best;
}

// Disc of radius R in R^2 triangulated by rings with 6m vertices on ring m.
inline std::vector<std::array<Eigen::Vector2d, 3>> ring_disc(double radius, int rings) {
  std::vector<std::vector<Eigen::Vector2d>> ring(static_cast<size_t>(rings) + 1);
  ring[0] = {Eigen::Vector2d::Zero()};
  for (int m = 1; m <= rings; ++m)
    for (int i = 0; i < 6 * m; ++i) {
      const double a = 2 * kPi * i / (6 * m);
      ring[static_cast<size_t>(m)].push_back(radius * m / rings * Eigen::Vector2d(std::cos(a), std::sin(a)));
    }
  std::vector<std::array<Eigen::Vector2d, 3>> tri;
  for (int m = 1; m <= rings; ++m) {
    const auto& in = ring[static_cast<size_t>(m) - 1];
    const auto& out = ring[static_cast<size_t>(m)];
    const size_t ni = in.size(), no = out.size();
    if (ni == 1) {
      for (size_t j = 0; j < no; ++j) tri.push_back({in[0], out[j], out[(j + 1) % no]});
      continue;
    }
    // Zipper between the two rings by angle.
    size_t i = 0, j = 0;
    while (i < ni || j < no) {
      const double ai = static_cast<double>(i + 1) / static_cast<double>(ni);
      const double aj = static_cast<double>(j + 1) / static_cast<double>(no);
      if (j < no && (i >= ni || aj <= ai)) {
        tri.push_back({in[i % ni], out[j % no], out[(j + 1) % no]});
        ++j;
      } else {
        tri.push_back({in[i % ni], out[j % no], in[(i + 1) % ni]});
        ++i;
      }
    }
  }
  return tri;
}

class ApproxManifold {
 public:
  // Elements whose parameter centroid lies within `interior` of the base point are the ones measured.
  ApproxManifold(const Point& c, const Mat& frame, double radius, double interior, int k)
      : c_(c), f_(frame), k_(k), interior_(interior) {
    if (k == 1) {
      const int pieces = 32;
      for (int s = 0; s < pieces; ++s) {
        Vec a(1), b(1);
        a(0) = radius * (-1 + 2.0 * s / pieces);
        b(0) = radius * (-1 + 2.0 * (s + 1) / pieces);
        add({a, b});
      }
    } else if (k == 2) {
      for (const auto& t : ring_disc(radius, 16)) add({Vec(t[0]), Vec(t[1]), Vec(t[2])});
    } else {
      throw std::invalid_argument("construct: only k = 1 and k = 2 are supported");
    }
  }

  std::vector<MeshElement>& elements() { return el_; }
  const std::vector<MeshElement>& elements() const { return el_; }
  const std::vector<SigmaMap>& maps() const { return maps_; }

  Point image(const Vec& u) const {
    Point x = c_ + f_ * u;
    for (const auto& m : maps_) x = m(x);
    return x;
  }

  bool near_interior(const MeshElement& e, double margin) const {
    Vec m = Vec::Zero(k_);
    for (const auto& u : e.u) m += u;
    return (m / static_cast<double>(e.u.size())).norm() <= interior_ + margin;
  }

  bool interior(const MeshElement& e) const {
    Vec m = Vec::Zero(k_);
    for (const auto& u : e.u) m += u;
    return (m / static_cast<double>(e.u.size())).norm() <= interior_ * (1 + 1e-12);
  }

  double volume(bool alive_only) const {
    double v = 0;
    for (const auto& e : el_)
      if ((!alive_only || e.alive) && interior(e)) v += simplex_volume(e.x);
    return v;
  }

  /// Splits elements meeting any zone ball until their diameter is at most h.
  void refine(const std::vector<std::pair<Point, double>>& zones, double h, size_t budget) {
    if (zones.empty()) return;
    std::vector<Point> zc;
    double zr = 0;
    for (const auto& z : zones) {
      zc.push_back(z.first);
      zr = std::max(zr, z.second);
    }
    const auto index = WeightedPointMeasure::from_points(zc, std::vector<double>(zc.size(), 1.0));
    for (int pass = 0; pass < 64; ++pass) {
      std::vector<size_t> split;
      for (size_t e = 0; e < el_.size(); ++e) {
        const double d = simplex_diameter(el_[e].x);
        if (d <= h || !near_interior(el_[e], d)) continue;
        const Point cen = simplex_centroid(el_[e].x);
        bool hit = false;
        index.for_each_in_ball(cen, zr + d, [&](size_t z) {
          if (!hit && (cen - zc[z]).norm() <= zones[z].second + d) hit = true;
        });
        if (hit) split.push_back(e);
      }
      if (split.empty()) return;
      if (el_.size() + split.size() * static_cast<size_t>(k_ == 1 ? 1 : 3) > budget)
        throw NumericalFailure("construct: mesh budget exceeded");
      std::vector<MeshElement> children;
      for (size_t e : split) {
        const auto& u = el_[e].u;
        if (k_ == 1) {
          const Vec m = 0.5 * (u[0] + u[1]);
          children.push_back({{u[0], m}, {}, el_[e].alive});
          children.push_back({{m, u[1]}, {}, el_[e].alive});
        } else {
          const Vec m01 = 0.5 * (u[0] + u[1]), m12 = 0.5 * (u[1] + u[2]), m20 = 0.5 * (u[2] + u[0]);
          children.push_back({{u[0], m01, m20}, {}, el_[e].alive});
          children.push_back({{m01, u[1], m12}, {}, el_[e].alive});
          children.push_back({{m20, m12, u[2]}, {}, el_[e].alive});
          children.push_back({{m01, m12, m20}, {}, el_[e].alive});
        }
      }
      parallel_for(children.size(), [&](size_t c) {
        for (const auto& u : children[c].u) children[c].x.push_back(image(u));
      });
      std::vector<char> gone(el_.size(), 0);
      for (size_t e : split) gone[e] = 1;
      std::vector<MeshElement> keep;
      keep.reserve(el_.size() - split.size() + children.size());
      for (size_t e = 0; e < el_.size(); ++e)
        if (!gone[e]) keep.push_back(std::move(el_[e]));
      for (auto& c : children) keep.push_back(std::move(c));
      el_.swap(keep);
    }
    throw NumericalFailure("construct: refinement did not settle");
  }

  /// Applies sigma to every vertex and records the largest stretch and displacement.
  void apply(SigmaMap sigma, double& distortion, double& displacement, size_t& worst) {
    const double r = sigma.r();
    std::vector<double> stretch(el_.size(), 1.0), disp(el_.size(), 0.0);
    parallel_for(el_.size(), [&](size_t e) {
      std::vector<Point> y;
      bool moved = false;
      for (const auto& x : el_[e].x) {
        y.push_back(sigma(x));
        const double d = (y.back() - x).norm();
        disp[e] = std::max(disp[e], d / r);
        moved = moved || d > 0;
      }
      if (moved) {
        const Eigen::Index k = static_cast<Eigen::Index>(y.size()) - 1;
        Mat e0(y[0].size(), k), e1(y[0].size(), k);
        for (Eigen::Index a = 0; a < k; ++a) {
          e0.col(a) = el_[e].x[static_cast<size_t>(a) + 1] - el_[e].x[0];
          e1.col(a) = y[static_cast<size_t>(a) + 1] - y[0];
        }
        const Mat g0 = e0.transpose() * e0, g1 = e1.transpose() * e1;
        const Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(g1, g0);
        const Vec ev = ges.eigenvalues();
        const double lo = std::sqrt(std::max(ev.minCoeff(), 0.0)), hi = std::sqrt(std::max(ev.maxCoeff(), 0.0));
        stretch[e] = lo > 0 ? std::max(hi, 1.0 / lo) : std::numeric_limits<double>::infinity();
      }
      el_[e].x = std::move(y);
    });
    for (size_t e = 0; e < el_.size(); ++e) {
      if (!interior(el_[e])) continue;
      if (stretch[e] > distortion) {
        distortion = stretch[e];
        worst = e;
      }
      displacement = std::max(displacement, disp[e]);
    }
    maps_.push_back(std::move(sigma));
  }

  struct Nearest {
    Point point;
    double distance = std::numeric_limits<double>::infinity();
    size_t element = 0;
  };

  LinearSubspace tangent(size_t e) const {
    const auto& x = el_[e].x;
    Mat edges(x[0].size(), static_cast<Eigen::Index>(x.size()) - 1);
    for (size_t a = 1; a < x.size(); ++a) edges.col(static_cast<Eigen::Index>(a) - 1) = x[a] - x[0];
    return LinearSubspace::span(edges);
  }

  /// Nearest points on live elements within the search radius.
  std::vector<Nearest> nearest(const std::vector<Point>& ys, double search) const {
    // Elements are bucketed by diameter so coarse elements far away do not widen every query.
    struct Bucket {
      std::vector<Point> cen;
      std::vector<size_t> id;
      double reach = 0;
      WeightedPointMeasure index;
    };
    std::map<int, Bucket> buckets;
    for (size_t e = 0; e < el_.size(); ++e) {
      if (!el_[e].alive) continue;
      const double d = simplex_diameter(el_[e].x);
      auto& b = buckets[static_cast<int>(std::ceil(std::log2(std::max(d, 1e-300))))];
      b.cen.push_back(simplex_centroid(el_[e].x));
      b.id.push_back(e);
      b.reach = std::max(b.reach, d);
    }
    for (auto& [c, b] : buckets) b.index = WeightedPointMeasure::from_points(b.cen, std::vector<double>(b.cen.size(), 1.0));
    std::vector<Nearest> out(ys.size());
    parallel_for(ys.size(), [&](size_t q) {
      for (const auto& [c, b] : buckets)
        b.index.for_each_in_ball(ys[q], search + b.reach, [&](size_t i) {
          const Point p = closest_on_simplex(el_[b.id[i]].x, ys[q]);
          const double d = (p - ys[q]).norm();
          if (d < out[q].distance) out[q] = {p, d, b.id[i]};
        });
    });
    return out;
  }

 private:
  void add(std::vector<Vec> u) {
    MeshElement e;
    for (const auto& v : u) e.x.push_back(c_ + f_ * v);
    e.u = std::move(u);
    el_.push_back(std::move(e));
  }

  Point c_;
  Mat f_;
  int k_;
  double interior_;
  std::vector<MeshElement> el_;
  std::vector<SigmaMap> maps_;
};

inline double tangent_of_angle(double sine) {
  const double s = std::min(sine, 1.0);
  return s >= 1 ? std::numeric_limits<double>::infinity() : s / std::sqrt(1 - s * s);
}

}  // namespace detail

/// Builds T_j, ..., T_{j+depth} over B_{r0}(center). Atoms carry radii (zero for a bare measure)
/// that decide when they become final balls.
inline ReifenbergTrace construct(const WeightedPointMeasure& full, const std::vector<double>& atom_radii,
                                 const Point& center, double r0, int k, const ReifenbergOptions& opt = {}) {
  if (!(opt.rho > 0 && opt.rho < 1)) throw std::invalid_argument("construct: need 0 < rho < 1");
  if (opt.depth < 0) throw std::invalid_argument("construct: depth must be nonnegative");
  if (!(r0 > 0)) throw std::invalid_argument("construct: r0 must be positive");
  if (k != 1 && k != 2) throw std::invalid_argument("construct: only k = 1 and k = 2 are supported");
  if (atom_radii.size() != full.size()) throw DimensionError("construct: one radius per atom is required");
  require_same_dim(center.size(), full.dim(), "construct");
  const double gate = opt.gate < 0 ? default_gate(k) : opt.gate;
  const int n = full.dim();
  if (n <= k) throw std::invalid_argument("construct: need k < n");

  ReifenbergTrace tr;
  tr.k = k;
  tr.center = center;
  tr.r0 = r0;
  tr.rho = opt.rho;
  tr.depth = opt.depth;

  // mu restricted to the ball.
  const auto inside = full.indices_in_ball(center, r0);
  const WeightedPointMeasure mu = full.subset(inside);
  std::vector<double> rad;
  for (size_t i : inside) rad.push_back(atom_radii[i]);
  tr.mass = mu.total_mass();
  const size_t na = mu.size();
  if (tr.mass < gate * std::pow(r0, k) || na <= static_cast<size_t>(k)) {
    tr.completed = true;
    return tr;
  }

  auto plane_of = [&](const Point& y, double r) { return best_plane(mu, y, r, k); };
  std::vector<char> alive(na, 1);
  auto excess = [&](const Point& y, double r, const BestPlane& bp, LevelTrace& lv) {
    double m = 0;
    mu.for_each_in_ball(y, r, [&](size_t a) {
      if (bp.plane.distance(mu.atom(a)) > opt.rho * r / 11) {
        if (alive[a]) {
          m += mu.weight(a);
          lv.excess_atoms.push_back(inside[a]);
        }
        alive[a] = 0;
      }
    });
    lv.excess_mass += m;
    const double d = displacement(mu, y, r, k, gate);
    const double lhs = m * std::pow(opt.rho * r / 11, 2);
    const double rhs = std::pow(r, k + 2) * d;
    lv.excess_ratio = std::max(lv.excess_ratio, rhs > 0 ? lhs / rhs : (lhs > 0 ? 1e300 : 0.0));
  };

  // Level j.
  const BestPlane top = plane_of(center, r0);
  const Point foot = top.plane.project(center);
  const double d0 = (foot - center).norm();
  detail::ApproxManifold t(foot, top.plane.direction().frame(), std::sqrt(std::max(0.0, 4 * r0 * r0 - d0 * d0)),
                           std::sqrt(std::max(0.0, r0 * r0 - d0 * d0)), k);
  LevelTrace first;
  first.level = 0;
  first.r = r0;
  first.good = {center};
  excess(center, r0, top, first);
  first.volume = first.volume_prime = t.volume(false);
  first.elements = t.elements().size();
  tr.initial_volume = first.volume;
  tr.levels.push_back(first);
  tr.excess_mass = first.excess_mass;

  std::vector<Point> good = {center};
  double r_prev = r0;
  for (int level = 1; level <= opt.depth; ++level) {
    const double r = r_prev * opt.rho;
    LevelTrace lv;
    lv.level = level;
    lv.r = r;

    // Live atoms inside the previous good balls split into final balls and the rest.
    const auto gidx = WeightedPointMeasure::from_points(good, std::vector<double>(good.size(), 1.0));
    std::vector<size_t> fin, rest;
    for (size_t a = 0; a < na; ++a) {
      if (!alive[a]) continue;
      bool covered = false;
      gidx.for_each_in_ball(mu.point(a), r_prev, [&](size_t) { covered = true; });
      if (!covered) {
        ++lv.uncovered;
        alive[a] = 0;
        continue;
      }
      (rad[a] >= r ? fin : rest).push_back(a);
    }
    for (size_t a : fin) {
      lv.final_atoms.push_back(inside[a]);
      lv.final_radii.push_back(rad[a]);
      alive[a] = 0;
    }

    // Centres on T_{i-1}' nearest to the remaining atoms, then a Vitali selection of r/3-balls.
    std::vector<Point> ra;
    for (size_t a : rest) ra.push_back(mu.atom(a));
    const auto near = t.nearest(ra, r);
    std::vector<Point> cand(rest.size());
    for (size_t q = 0; q < rest.size(); ++q) {
      if (near[q].distance > r / 10) ++lv.off_manifold;
      cand[q] = near[q].distance <= r / 2 ? near[q].point : ra[q];
    }
    std::vector<Point> chosen;
    for (size_t q : detail::lex_order(cand)) {
      bool ok = true;
      for (const auto& y : chosen)
        if ((y - cand[q]).norm() < 2 * r / 3) {
          ok = false;
          break;
        }
      for (size_t f = 0; ok && f < fin.size(); ++f)
        if ((mu.atom(fin[f]) - cand[q]).norm() < 0.8 * rad[fin[f]]) ok = false;
      if (ok) chosen.push_back(cand[q]);
    }
    for (size_t q = 0; q < rest.size(); ++q) {
      bool covered = false;
      for (const auto& y : chosen)
        if ((y - ra[q]).norm() <= r) {
          covered = true;
          break;
        }
      if (!covered) {
        ++lv.uncovered;
        alive[rest[q]] = 0;
      }
    }

    // Good and bad balls; bad balls and final balls join the remainder.
    for (const auto& y : chosen) (mu.mass_in_ball(y, r) >= gate * std::pow(r, k) ? lv.good : lv.bad).push_back(y);
    for (const auto& y : lv.bad) mu.for_each_in_ball(y, r, [&](size_t a) { alive[a] = 0; });

    // Resolve the mesh near everything this level touches, then cut the holes.
    std::vector<std::pair<Point, double>> zones;
    for (const auto& y : lv.good) zones.emplace_back(y, 3 * r);
    for (const auto& y : lv.bad) zones.emplace_back(y, r);
    for (size_t f = 0; f < fin.size(); ++f) zones.emplace_back(mu.atom(fin[f]), std::max(r, rad[fin[f]]));
    t.refine(zones, r / (opt.resolution > 0 ? opt.resolution : (k == 1 ? 8 : 4)), opt.max_elements);
    lv.ledger_rhs = t.volume(true);
    std::vector<std::pair<Point, double>> holes;
    for (const auto& y : lv.bad) holes.emplace_back(y, r / 6);
    for (size_t f = 0; f < fin.size(); ++f) holes.emplace_back(mu.atom(fin[f]), rad[fin[f]] / 6);
    for (auto& e : t.elements()) {
      if (!e.alive) continue;
      const Point c = detail::simplex_centroid(e.x);
      for (const auto& h : holes)
        if ((c - h.first).norm() < h.second) {
          e.alive = false;
          break;
        }
    }
    const double kept = t.volume(true);
    lv.ledger_lhs = kept + static_cast<double>(lv.bad.size()) * omega(k) * std::pow(r / 10, k);
    for (double rs : lv.final_radii) lv.ledger_lhs += omega(k) * std::pow(rs / 10, k);
    tr.bad_final_sum += static_cast<double>(lv.bad.size()) * std::pow(r, k);
    for (double rs : lv.final_radii) tr.bad_final_sum += std::pow(rs, k);

    // Sigma from the good balls, their best planes and centres of mass. A ball with at most k
    // atoms does not determine a plane; it keeps the tangent of T_i.
    std::vector<Point> anchors;
    std::vector<LinearSubspace> planes;
    const auto feet = t.nearest(lv.good, 2 * r);
    for (size_t g = 0; g < lv.good.size(); ++g) {
      const Point& y = lv.good[g];
      anchors.push_back(moments(mu, y, r).center_of_mass);
      const LinearSubspace fallback = std::isfinite(feet[g].distance) ? t.tangent(feet[g].element) : LinearSubspace();
      if (!detail::ball_has_more_than(mu, y.data(), r, static_cast<size_t>(k)) && fallback.dim() == k) {
        planes.push_back(fallback);
        continue;
      }
      const BestPlane bp = plane_of(y, r);
      planes.push_back(bp.plane.direction());
      excess(y, r, bp, lv);
    }
    size_t worst = 0;
    try {
      t.apply(SigmaMap(lv.good, anchors, planes, r), lv.distortion, lv.max_displacement, worst);
    } catch (const std::invalid_argument& e) {
      tr.failure = std::string("level ") + std::to_string(level) + ": " + e.what();
      tr.levels.push_back(lv);
      return tr;
    }
    lv.volume = t.volume(false);
    lv.volume_prime = t.volume(true);
    lv.volume_increment = lv.volume_prime - kept;
    lv.elements = t.elements().size();
    tr.excess_mass += lv.excess_mass;

    // Graph check of T_i over each good plane.
    {
      std::vector<Point> cen;
      std::vector<size_t> id;
      for (size_t e = 0; e < t.elements().size(); ++e)
        if (t.interior(t.elements()[e])) {
          cen.push_back(detail::simplex_centroid(t.elements()[e].x));
          id.push_back(e);
        }
      const auto cidx = WeightedPointMeasure::from_points(cen, std::vector<double>(cen.size(), 1.0));
      std::vector<double> bound(lv.good.size(), 0.0);
      parallel_for(lv.good.size(), [&](size_t g) {
        if (cen.empty()) return;
        double height = 0, slope = 0;
        const Mat perp = Mat::Identity(n, n) - planes[g].projector();
        cidx.for_each_in_ball(lv.good[g], 1.5 * r, [&](size_t c) {
          const auto& e = t.elements()[id[c]];
          for (const auto& x : e.x) height = std::max(height, (perp * (x - anchors[g])).norm());
          const auto span = t.tangent(id[c]);
          if (span.dim() == k) slope = std::max(slope, detail::tangent_of_angle(grassmann_distance(span, planes[g])));
        });
        bound[g] = height / r + slope;
      });
      for (double v : bound) lv.graph_bound = std::max(lv.graph_bound, v);
    }

    if (lv.distortion > opt.max_distortion) {
      const Point c = detail::simplex_centroid(t.elements()[worst].x);
      size_t nearest = 0;
      for (size_t g = 1; g < lv.good.size(); ++g)
        if ((lv.good[g] - c).norm() < (lv.good[nearest] - c).norm()) nearest = g;
      std::ostringstream os;
      os << "level " << level << ": sigma distortion " << lv.distortion << " near good ball " << nearest;
      tr.failure = os.str();
      tr.levels.push_back(lv);
      return tr;
    }
    tr.levels.push_back(lv);
    good = lv.good;
    r_prev = r;
    if (good.empty()) break;
  }
  tr.remaining_good = good.size();
  tr.final_volume = t.volume(false);
  tr.final_volume_prime = t.volume(true);
  tr.completed = true;
  return tr;
}

inline ReifenbergTrace construct(const WeightedPointMeasure& mu, const Point& center, double r0, int k,
                                 const ReifenbergOptions& opt = {}) {
  return construct(mu, std::vector<double>(mu.size(), 0.0), center, r0, k, opt);
}

inline ReifenbergTrace construct(const BallSystem& b, const Point& center, double r0, const ReifenbergOptions& opt = {}) {
  if (const auto o = b.overlap())
    throw std::invalid_argument("construct: balls " + std::to_string(o->first) + " and " + std::to_string(o->second) +
                                " overlap");
  return construct(b.measure(), b.radii(), center, r0, b.k(), opt);
}

/// Packing figures of a completed trace: final-ball radii and the mass ratio of the top ball.
inline PackingVerdict packing_verdict(const ReifenbergTrace& t) {
  PackingVerdict v;
  v.ceiling = std::pow(40.0, t.k) * omega(t.k);
  for (const auto& lv : t.levels)
    for (double r : lv.final_radii) v.sum_rk += std::pow(r, t.k);
  v.uniform_bound = t.mass / std::pow(t.r0, t.k);
  v.worst_center = t.center;
  v.worst_r = t.r0;
  v.within = v.uniform_bound <= v.ceiling;
  return v;
}

}  // namespace qs
