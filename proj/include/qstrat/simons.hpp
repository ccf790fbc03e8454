#pragma once

#include "qstrat/varifold.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace qs {

/// Simons cone C = {(u, w) in R^4 x R^4 : |u| = |w|} with multiplicity one.
///
/// Integrals over balls use the SO(4) x SO(4) symmetry: y = (rho / sqrt 2)(u, w) with u, w unit,
/// d mu = 2 pi^2 sin^2(alpha) sin^2(beta) rho^6 d rho d alpha d beta, where alpha, beta are the angles
/// of u, w against the two halves of x.
class SimonsCone {
 public:
  explicit SimonsCone(double quadrature_h = 0.01) : h_(quadrature_h) {
    if (!(h_ > 0 && h_ < 1)) throw std::invalid_argument("SimonsCone: quadrature_h must lie in (0,1)");
  }

  static constexpr int kAmbient = 8;
  static constexpr int kDim = 7;

  int ambient_dim() const { return kAmbient; }
  int dim() const { return kDim; }
  double quadrature_h() const { return h_; }
  SimonsCone with_quadrature_h(double h) const { return SimonsCone(h); }

  /// Area of the link S^3(1/sqrt2) x S^3(1/sqrt2).
  static double link_area() { return std::pow(kPi, 4) / 2; }
  /// Density at the vertex, mu(B_1(0)).
  static double vertex_density() { return link_area() / 7; }

  static bool on_cone(const Point& y, double tol = 1e-12) {
    return std::abs(y.head(4).norm() - y.tail(4).norm()) <= tol * (1 + y.norm());
  }

  /// Point of C with |y| = rho in the direction fixed by the two unit vectors.
  static Point cone_point(double rho, const Vec& u, const Vec& w) {
    Point y(8);
    y << u / u.norm(), w / w.norm();
    return rho / std::sqrt(2.0) * y;
  }

  static Point axis_point(double rho) {
    Vec u = Vec::Zero(4), w = Vec::Zero(4);
    u(0) = w(0) = 1;
    return cone_point(rho, u, w);
  }

  double mass(const Point& x, double r) const {
    require_same_dim(x.size(), 8, "SimonsCone::mass");
    if (!(r > 0)) throw std::invalid_argument("mass: r must be positive");
    return shell(x, 0.0, r, Mode::kMass).mass;
  }

  double shell_mass(const Point& x, double s, double r) const { return shell(x, s, r, Mode::kMass).mass; }

  double defect(const Point& x, double s, double r) const {
    require_same_dim(x.size(), 8, "SimonsCone::defect");
    if (!(s > 0 && s < r)) throw std::invalid_argument("defect: need 0 < s < r");
    return shell(x, s, r, Mode::kDefect).defect;
  }

  NormalMoment normal_moment(const Point& x, double s, double r) const {
    require_same_dim(x.size(), 8, "SimonsCone::normal_moment");
    const Acc acc = shell(x, s, r, Mode::kNormal);
    NormalMoment out{acc.mass, Mat::Zero(8, 8)};
    if (!(acc.mass > 0)) return out;
    const Vec ah = unit_or_axis(x.head(4)), bh = unit_or_axis(x.tail(4));
    const Mat ia = Mat::Identity(4, 4) - ah * ah.transpose();
    const Mat ib = Mat::Identity(4, 4) - bh * bh.transpose();
    // N = (u, -w)/sqrt2 averaged over the stabilizers of a and b.
    out.q.topLeftCorner(4, 4) = 0.5 * (acc.cca * ah * ah.transpose() + acc.ssa / 3 * ia);
    out.q.bottomRightCorner(4, 4) = 0.5 * (acc.ccb * bh * bh.transpose() + acc.ssb / 3 * ib);
    out.q.topRightCorner(4, 4) = -0.5 * acc.cab * ah * bh.transpose();
    out.q.bottomLeftCorner(4, 4) = out.q.topRightCorner(4, 4).transpose();
    return out;
  }

  /// Points of C in B_r(x) along the ray through the closest cone point; every value of |y| attained
  /// in C cap B_r(x) is attained on this ray when x lies on C.
  std::vector<Point> support_samples(const Point& x, double r, double spacing) const {
    const double t = x.norm();
    const Point dir = t > 0 && on_cone(x, 1e-9) ? Point(x / t) : Point(axis_point(1.0));
    std::vector<Point> out;
    const double lo = std::max(0.0, t - r), hi = t + r;
    const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) / spacing)));
    for (int i = 0; i <= steps; ++i) {
      const Point y = (lo + (hi - lo) * i / steps) * dir;
      if ((y - x).norm() <= r) out.push_back(y);
    }
    return out;
  }

  /// theta_r(y) for y on C with |y| = t r, from a cached table of F(t) = theta_1(t e).
  double density_on_cone(double abs_y, double r) const {
    const double t = abs_y / r;
    const auto& tab = table();
    if (t >= tab.tmax) return omega(7) + (tab.f.back() - omega(7)) * sq(tab.tmax / t);
    const double u = t / tab.tmax * (tab.f.size() - 1);
    const size_t i = std::min(static_cast<size_t>(u), tab.f.size() - 2);
    const double a = u - i;
    return (1 - a) * tab.f[i] + a * tab.f[i + 1];
  }

  /// Quadrature atoms of C cap (B_outer \ B_inner) around the origin, geometric in rho.
  WeightedPointMeasure to_measure(double inner, double outer, int nodes_per_octave = 8, int angular_nodes = 8) const {
    if (!(inner > 0 && inner < outer)) throw std::invalid_argument("to_measure: need 0 < inner < outer");
    std::vector<double> gx, gw, ax, aw;
    gauss_legendre(nodes_per_octave, gx, gw);
    gauss_legendre(angular_nodes, ax, aw);
    std::vector<double> coords, weights;
    const double lo = std::log2(inner), hi = std::log2(outer);
    const int shells = std::max(1, static_cast<int>(std::ceil(hi - lo - 1e-12)));
    for (int sh = 0; sh < shells; ++sh) {
      const double l0 = lo + (hi - lo) * sh / shells, l1 = lo + (hi - lo) * (sh + 1) / shells;
      for (size_t i = 0; i < gx.size(); ++i) {
        const double l = 0.5 * (l0 + l1) + 0.5 * (l1 - l0) * gx[i];
        const double rho = std::exp2(l);
        const double wr = 0.5 * (l1 - l0) * gw[i] * std::log(2.0) * rho * std::pow(rho, 6);
        for (size_t a = 0; a < ax.size(); ++a)
          for (size_t b = 0; b < ax.size(); ++b) {
            const double al = kPi / 2 * (1 + ax[a]), be = kPi / 2 * (1 + ax[b]);
            const double w = wr * 2 * kPi * kPi * sq(kPi / 2) * aw[a] * aw[b] * sq(std::sin(al)) * sq(std::sin(be));
            Vec u = Vec::Zero(4), v = Vec::Zero(4);
            u(0) = std::cos(al);
            u(1) = std::sin(al);
            v(0) = std::cos(be);
            v(1) = std::sin(be);
            const Point y = cone_point(rho, u, v);
            coords.insert(coords.end(), y.data(), y.data() + 8);
            weights.push_back(w);
          }
      }
    }
    return WeightedPointMeasure(8, std::move(coords), std::move(weights));
  }

 private:
  enum class Mode { kMass, kDefect, kNormal };

  struct Acc {
    double mass = 0, defect = 0;
    double cca = 0, ssa = 0, ccb = 0, ssb = 0, cab = 0;
  };

  struct Table {
    double tmax = 8;
    std::vector<double> f;
  };

  static double sq(double v) { return v * v; }

  static Vec unit_or_axis(const Vec& v) {
    const double n = v.norm();
    if (n > 0) return v / n;
    Vec e = Vec::Zero(v.size());
    e(0) = 1;
    return e;
  }

  const Table& table() const {
    static std::once_flag once;
    static Table tab;
    std::call_once(once, [] {
      const SimonsCone fine(0.01);
      const int n = 2049;
      tab.f.resize(n);
      for (int i = 0; i < n; ++i) tab.f[static_cast<size_t>(i)] = fine.mass(axis_point(tab.tmax * i / (n - 1)), 1.0);
    });
    return tab;
  }

  // Composite Gauss nodes on [0,1] after the map t -> (1 - cos(pi t))/2, which removes square-root
  // behaviour at both ends.
  struct Rule {
    std::vector<double> t, w;
  };

  const Rule& rule() const {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<Rule>> cache;
    const int panels = std::max(2, static_cast<int>(std::ceil(0.1 / h_)));
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[panels];
    if (!slot) {
      slot = std::make_unique<Rule>();
      std::vector<double> gx, gw;
      gauss_legendre(4, gx, gw);
      for (int p = 0; p < panels; ++p)
        for (size_t i = 0; i < gx.size(); ++i) {
          const double u = (p + 0.5 * (1 + gx[i])) / panels;
          slot->t.push_back(0.5 * (1 - std::cos(kPi * u)));
          slot->w.push_back(0.5 * gw[i] / panels * 0.5 * kPi * std::sin(kPi * u));
        }
    }
    return *slot;
  }

  // Region of the (alpha, beta) square where the ball B_R(x) meets the ray.
  struct Ball {
    double A, B, X2, R;
    bool full() const { return X2 <= R * R; }
    double q() const { return std::sqrt(std::max(0.0, X2 - R * R)); }
    // Largest alpha with a nonempty beta range; negative when empty.
    double alpha_max() const {
      if (full()) return kPi;
      const double t = std::sqrt(2.0) * q();
      if (A == 0) return B >= t ? kPi : -1;
      const double c = (t - B) / A;
      if (c > 1) return -1;
      return std::acos(std::max(-1.0, c));
    }
    // Alpha below which the whole beta range [0, pi] is admissible.
    double alpha_full() const {
      if (full()) return kPi;
      const double t = std::sqrt(2.0) * q();
      if (A == 0) return B == 0 || -B >= t ? kPi : 0;
      const double c = (t + B) / A;
      if (c > 1) return 0;
      return std::acos(std::max(-1.0, c));
    }
    double beta_max(double alpha) const {
      if (full()) return kPi;
      const double rhs = std::sqrt(2.0) * q() - A * std::cos(alpha);
      if (B == 0) return rhs <= 0 ? kPi : -1;
      const double c = rhs / B;
      if (c > 1) return -1;
      return std::acos(std::max(-1.0, c));
    }
    // rho interval [lo, hi] of the ball along the ray with c = <y/|y|, x>.
    bool interval(double c, double& lo, double& hi) const {
      const double disc = c * c - X2 + R * R;
      if (disc < 0) return false;
      const double sd = std::sqrt(disc);
      hi = c + sd;
      if (hi <= 0) return false;
      lo = full() ? 0.0 : (X2 - R * R) / hi;  // product of roots
      lo = std::max(0.0, lo);
      return hi > lo;
    }
  };

  Acc shell(const Point& x, double s, double r, Mode mode) const {
    if (!(r > 0 && s >= 0 && s < r)) throw std::invalid_argument("SimonsCone: need 0 <= s < r");
    const double A = x.head(4).norm(), B = x.tail(4).norm(), X2 = x.squaredNorm();
    const Ball outer{A, B, X2, r}, inner{A, B, X2, s};
    Acc acc;
    const double amax = outer.alpha_max();
    if (amax <= 0) return acc;
    std::vector<double> cuts{0.0, amax};
    for (double c : {outer.alpha_full(), s > 0 ? inner.alpha_max() : -1.0, s > 0 ? inner.alpha_full() : -1.0})
      if (c > 0 && c < amax) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    const Rule& rl = rule();
    std::vector<double> gx, gw;
    gauss_legendre(8, gx, gw);
    const double norm = 2 * kPi * kPi;
    for (size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double a0 = cuts[k], a1 = cuts[k + 1];
      if (a1 - a0 <= 1e-15) continue;
      for (size_t i = 0; i < rl.t.size(); ++i) {
        const double al = a0 + (a1 - a0) * rl.t[i];
        const double wa = (a1 - a0) * rl.w[i] * sq(std::sin(al));
        const double bmax = outer.beta_max(al);
        if (bmax <= 0) continue;
        double bcuts[3] = {0.0, bmax, bmax};
        int nb = 2;
        if (s > 0) {
          const double bi = inner.beta_max(al);
          if (bi > 0 && bi < bmax) {
            bcuts[1] = bi;
            bcuts[2] = bmax;
            nb = 3;
          }
        }
        for (int piece = 0; piece + 1 < nb; ++piece) {
          const double b0 = bcuts[piece], b1 = bcuts[piece + 1];
          if (b1 - b0 <= 1e-15) continue;
          for (size_t jn = 0; jn < rl.t.size(); ++jn) {
            const double be = b0 + (b1 - b0) * rl.t[jn];
            const double w = norm * wa * (b1 - b0) * rl.w[jn] * sq(std::sin(be));
            const double ca = std::cos(al), cb = std::cos(be);
            const double c = (A * ca + B * cb) / std::sqrt(2.0);
            double lo, hi;
            if (!outer.interval(c, lo, hi)) continue;
            double ilo = 0, ihi = 0;
            const bool hole = s > 0 && inner.interval(c, ilo, ihi) && ihi > lo && ilo < hi;
            std::array<std::pair<double, double>, 2> iv;
            int niv = 0;
            if (!hole) {
              iv[niv++] = {lo, hi};
            } else {
              if (ilo > lo) iv[niv++] = {lo, ilo};
              if (ihi < hi) iv[niv++] = {ihi, hi};
            }
            double m = 0;
            for (int q = 0; q < niv; ++q) m += (std::pow(iv[q].second, 7) - std::pow(iv[q].first, 7)) / 7;
            m *= w;
            acc.mass += m;
            if (mode == Mode::kNormal) {
              acc.cca += m * ca * ca;
              acc.ssa += m * (1 - ca * ca);
              acc.ccb += m * cb * cb;
              acc.ssb += m * (1 - cb * cb);
              acc.cab += m * ca * cb;
            }
            if (mode == Mode::kDefect) {
              const double e2 = sq(A * ca - B * cb) / 2;
              double d = 0;
              for (int q = 0; q < niv; ++q) {
                const double p0 = iv[q].first, p1 = iv[q].second;
                const int panels = std::max(1, static_cast<int>(std::ceil((p1 - p0) / std::max(s, 1e-300))));
                for (int p = 0; p < panels; ++p) {
                  const double u0 = p0 + (p1 - p0) * p / panels, u1 = p0 + (p1 - p0) * (p + 1) / panels;
                  for (size_t g = 0; g < gx.size(); ++g) {
                    const double rho = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * gx[g];
                    const double dist2 = rho * rho - 2 * c * rho + X2;
                    d += 0.5 * (u1 - u0) * gw[g] * std::pow(rho, 6) * e2 / std::pow(dist2, 4.5);
                  }
                }
              }
              acc.defect += w * d;
            }
          }
        }
      }
    }
    return acc;
  }

  double h_;
};

inline double support_density(const SimonsCone& c, const Point& y, double r) { return c.density_on_cone(y.norm(), r); }

namespace simons {

/// |A|(x) = sqrt 6 / |x| on the cone.
inline double second_fundamental_norm(const Point& x) {
  const double t = x.norm();
  if (!(t > 0)) throw std::invalid_argument("second_fundamental_norm: x must be nonzero");
  return std::sqrt(6.0) / t;
}

/// Largest r with sup over B_r(x) of |A| <= 1/r.
inline double regularity_scale(const Point& x) { return x.norm() / (1 + std::sqrt(6.0)); }

/// Closed form of the integral of |A|^p over C cap (B_1 \ B_cutoff).
inline double curvature_integral(double p, double cutoff) {
  if (!(p > 0)) throw std::invalid_argument("curvature_integral: p must be positive");
  if (!(cutoff > 0 && cutoff < 1)) throw std::invalid_argument("curvature_integral: cutoff must lie in (0,1)");
  const double c = SimonsCone::link_area() * std::pow(6.0, p / 2);
  const double e = 7 - p;
  return c * (std::abs(e) < 1e-14 ? std::log(1 / cutoff) : (1 - std::pow(cutoff, e)) / e);
}

/// The same integral by summing over quadrature atoms of the cone.
inline double curvature_integral_quadrature(const SimonsCone& c, double p, double cutoff) {
  const int per = std::max(2, static_cast<int>(std::ceil(0.04 / c.quadrature_h())));
  const auto mu = c.to_measure(cutoff, 1.0, per, 6);
  double s = 0;
  for (size_t i = 0; i < mu.size(); ++i) s += mu.weight(i) * std::pow(second_fundamental_norm(mu.atom(i)), p);
  return s;
}

namespace detail {

inline std::vector<std::array<int, 4>> refine_s3(std::vector<Vec>& verts, const std::vector<std::array<int, 4>>& tets) {
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    Vec m = verts[static_cast<size_t>(a)] + verts[static_cast<size_t>(b)];
    verts.push_back(m / m.norm());
    const int id = static_cast<int>(verts.size()) - 1;
    mid.emplace(key, id);
    return id;
  };
  std::vector<std::array<int, 4>> out;
  for (const auto& t : tets) {
    const int a = t[0], b = t[1], c = t[2], d = t[3];
    const int ab = midpoint(a, b), ac = midpoint(a, c), ad = midpoint(a, d), bc = midpoint(b, c),
              bd = midpoint(b, d), cd = midpoint(c, d);
    out.push_back({a, ab, ac, ad});
    out.push_back({b, ab, bc, bd});
    out.push_back({c, ac, bc, cd});
    out.push_back({d, ad, bd, cd});
    // Octahedron split along the ab-cd diagonal.
    out.push_back({ab, cd, ac, ad});
    out.push_back({ab, cd, ad, bd});
    out.push_back({ab, cd, bd, bc});
    out.push_back({ab, cd, bc, ac});
  }
  return out;
}

}  // namespace detail

/// Triangulation of the unit S^3 from the 16-cell, refined `level` times.
inline void s3_triangulation(int level, std::vector<Vec>& verts, std::vector<std::array<int, 4>>& tets) {
  verts.clear();
  tets.clear();
  for (int i = 0; i < 4; ++i)
    for (int sgn : {1, -1}) {
      Vec e = Vec::Zero(4);
      e(i) = sgn;
      verts.push_back(e);
    }
  for (int mask = 0; mask < 16; ++mask) {
    std::array<int, 4> t{};
    for (int i = 0; i < 4; ++i) t[static_cast<size_t>(i)] = 2 * i + ((mask >> i) & 1);
    tets.push_back(t);
  }
  for (int l = 0; l < level; ++l) tets = detail::refine_s3(verts, tets);
}

/// Cone over the product triangulation of S^3(1/sqrt2) x S^3(1/sqrt2), truncated at radius R.
inline SimplicialVarifold mesh(int level, double R = 2.0, double h = 0.01) {
  if (level < 0 || level > 1) throw std::invalid_argument("simons mesh: level must be 0 or 1");
  std::vector<Vec> sv;
  std::vector<std::array<int, 4>> tets;
  s3_triangulation(level, sv, tets);
  const int nv = static_cast<int>(sv.size());
  std::vector<Point> verts{Point::Zero(8)};
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv; ++j) verts.push_back(SimonsCone::cone_point(R, sv[static_cast<size_t>(i)], sv[static_cast<size_t>(j)]));
  auto id = [&](int i, int j) { return 1 + i * nv + j; };
  // Monotone lattice paths from (0,0) to (3,3) triangulate the product of two tetrahedra.
  std::vector<std::vector<std::pair<int, int>>> paths;
  for (int mask = 0; mask < 64; ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) != 3) continue;
    std::vector<std::pair<int, int>> p{{0, 0}};
    int a = 0, b = 0;
    for (int step = 0; step < 6; ++step) {
      if ((mask >> step) & 1) ++a;
      else ++b;
      p.emplace_back(a, b);
    }
    paths.push_back(p);
  }
  std::vector<std::vector<int>> simp;
  for (auto t1 : tets) {
    std::sort(t1.begin(), t1.end());
    for (auto t2 : tets) {
      std::sort(t2.begin(), t2.end());
      for (const auto& p : paths) {
        std::vector<int> s{0};
        for (const auto& [a, b] : p) s.push_back(id(t1[static_cast<size_t>(a)], t2[static_cast<size_t>(b)]));
        simp.push_back(s);
      }
    }
  }
  SimplicialVarifold v(8, 7, std::move(verts), std::move(simp), {}, h);
  v.set_apex_resolution(1e300);
  return v;
}

/// Checks that every non-apex vertex lies on the cone at radius R.
inline bool mesh_is_valid(const SimplicialVarifold& v, double R = 2.0) {
  if (v.ambient_dim() != 8 || v.dim() != 7) return false;
  for (size_t i = 0; i < v.vertices().size(); ++i) {
    const Point& p = v.vertices()[i];
    if (p.norm() == 0) continue;
    if (!SimonsCone::on_cone(p, 1e-12) || std::abs(p.norm() - R) > 1e-12 * R) return false;
  }
  for (const auto& s : v.simplices())
    if (v.vertices()[static_cast<size_t>(s[0])].norm() != 0) return false;
  return true;
}

}  // namespace simons

}  // namespace qs
