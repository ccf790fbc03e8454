#pragma once

#include "qstrat/geom.hpp"
#include "qstrat/measure.hpp"

#include <array>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace qs {

/// Unnormalized integral of the normal projector over a region, with the region's mass.
struct NormalMoment {
  double mass = 0;
  Mat q;
};

namespace detail {

// Region s < |y - x| <= r; s == 0 means the closed ball.
struct Shell {
  const double* x;
  double s, r;
};

inline double sq(double v) { return v * v; }

// Parameter intervals of a + t (b - a), t in [0,1], lying in the closed ball B_R(x).
inline std::pair<double, double> segment_ball(const Vec& a, const Vec& b, const double* x, double R) {
  const Eigen::Index n = a.size();
  double A = 0, B = 0, C = 0;
  for (Eigen::Index d = 0; d < n; ++d) {
    const double e = b(d) - a(d), f = a(d) - x[d];
    A += e * e;
    B += e * f;
    C += f * f;
  }
  C -= R * R;
  if (A == 0) return C <= 0 ? std::pair{0.0, 1.0} : std::pair{1.0, 0.0};
  const double disc = B * B - A * C;
  if (disc < 0) return {1.0, 0.0};
  const double sd = std::sqrt(disc);
  // Stable roots.
  const double q = -(B + std::copysign(sd, B));
  double t0, t1;
  if (q == 0) {
    t0 = t1 = 0;
  } else {
    t0 = q / A;
    t1 = C / q;
  }
  if (t0 > t1) std::swap(t0, t1);
  return {std::max(0.0, t0), std::min(1.0, t1)};
}

// Intervals of [0,1] inside the shell, at most two.
inline int segment_shell(const Vec& a, const Vec& b, const Shell& sh, std::array<std::pair<double, double>, 2>& out) {
  const auto o = segment_ball(a, b, sh.x, sh.r);
  if (o.first >= o.second) return 0;
  if (sh.s <= 0) {
    out[0] = o;
    return 1;
  }
  const auto in = segment_ball(a, b, sh.x, sh.s);
  if (in.first >= in.second) {
    out[0] = o;
    return 1;
  }
  int c = 0;
  if (in.first > o.first) out[c++] = {o.first, std::min(in.first, o.second)};
  if (in.second < o.second) out[c++] = {std::max(in.second, o.first), o.second};
  return c;
}

// Area and first moment of the chord polygon of (triangle cap disk) in 2-d.
inline void clip_triangle_disk(const std::array<Eigen::Vector2d, 3>& tri, const Eigen::Vector2d& c, double rho,
                               double& area, Eigen::Vector2d& moment) {
  area = 0;
  moment.setZero();
  if (!(rho > 0)) return;
  std::array<Eigen::Vector2d, 9> poly;
  int np = 0;
  const double r2 = rho * rho;
  for (int e = 0; e < 3; ++e) {
    const Eigen::Vector2d& p = tri[static_cast<size_t>(e)];
    const Eigen::Vector2d& q = tri[static_cast<size_t>((e + 1) % 3)];
    const bool pin = (p - c).squaredNorm() <= r2;
    if (pin) poly[static_cast<size_t>(np++)] = p;
    const Eigen::Vector2d d = q - p, f = p - c;
    const double A = d.squaredNorm(), B = d.dot(f), C = f.squaredNorm() - r2;
    const double disc = B * B - A * C;
    if (A == 0 || disc <= 0) continue;
    const double sd = std::sqrt(disc);
    const double ta = (-B - sd) / A, tb = (-B + sd) / A;
    if (ta > 0 && ta < 1) poly[static_cast<size_t>(np++)] = p + ta * d;
    if (tb > 0 && tb < 1) poly[static_cast<size_t>(np++)] = p + tb * d;
  }
  if (np == 0) {
    // Disk strictly inside the triangle, or disjoint from it.
    auto side = [&](int i) {
      const Eigen::Vector2d& p = tri[static_cast<size_t>(i)];
      const Eigen::Vector2d& q = tri[static_cast<size_t>((i + 1) % 3)];
      return (q.x() - p.x()) * (c.y() - p.y()) - (q.y() - p.y()) * (c.x() - p.x());
    };
    const double s0 = side(0), s1 = side(1), s2 = side(2);
    if ((s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0)) {
      area = kPi * r2;
      moment = area * c;
    }
    return;
  }
  double a2 = 0;
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  for (int i = 0; i < np; ++i) {
    const Eigen::Vector2d& p = poly[static_cast<size_t>(i)];
    const Eigen::Vector2d& q = poly[static_cast<size_t>((i + 1) % np)];
    const double cr = p.x() * q.y() - q.x() * p.y();
    a2 += cr;
    m += cr * (p + q);
  }
  area = std::abs(a2) / 2;
  if (a2 != 0) moment = (m / (3 * a2)) * area;
}

// Grundmann-Moller rule of degree 2s+1 on a d-simplex: barycentric points (d+1 rows) and weights summing to 1.
struct SimplexRule {
  Mat bary;
  Vec weight;
};

inline SimplexRule grundmann_moller(int d, int s) {
  std::vector<Vec> pts;
  std::vector<double> wts;
  const int deg = 2 * s + 1;
  for (int i = 0; i <= s; ++i) {
    const double den = deg + d - 2 * i;
    double w = std::pow(den, deg) * ((i % 2) ? -1.0 : 1.0);
    w /= std::tgamma(i + 1.0) * std::tgamma(deg + d - i + 1.0);
    // Compositions of s - i into d + 1 parts.
    std::vector<int> beta(static_cast<size_t>(d + 1), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == d) {
        beta[static_cast<size_t>(d)] = left;
        Vec b(d + 1);
        for (int k = 0; k <= d; ++k) b(k) = (2 * beta[static_cast<size_t>(k)] + 1) / den;
        pts.push_back(b);
        wts.push_back(w);
        return;
      }
      for (int v = 0; v <= left; ++v) {
        beta[static_cast<size_t>(pos)] = v;
        rec(pos + 1, left - v);
      }
    };
    rec(0, s - i);
  }
  SimplexRule r{Mat(d + 1, static_cast<Eigen::Index>(pts.size())), Vec(static_cast<Eigen::Index>(wts.size()))};
  double sum = 0;
  for (double w : wts) sum += w;
  for (size_t k = 0; k < pts.size(); ++k) {
    r.bary.col(static_cast<Eigen::Index>(k)) = pts[k];
    r.weight(static_cast<Eigen::Index>(k)) = wts[k] / sum;
  }
  return r;
}

// Exact area of (triangle cap disk) in 2-d, as a signed sum of sector and triangle pieces per edge.
inline double disk_triangle_area(const std::array<Eigen::Vector2d, 3>& tri, const Eigen::Vector2d& c, double rho) {
  if (!(rho > 0)) return 0.0;
  auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); };
  auto angle = [&](const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return std::atan2(cross(u, v), u.dot(v)); };
  double total = 0;
  for (int e = 0; e < 3; ++e) {
    const Eigen::Vector2d p = tri[static_cast<size_t>(e)] - c;
    const Eigen::Vector2d q = tri[static_cast<size_t>((e + 1) % 3)] - c;
    const Eigen::Vector2d d = q - p;
    const double A = d.squaredNorm(), B = d.dot(p), C = p.squaredNorm() - rho * rho;
    const double disc = B * B - A * C;
    if (A == 0) continue;
    if (disc <= 0) {
      total += 0.5 * rho * rho * angle(p, q);
      continue;
    }
    const double sd = std::sqrt(disc);
    const double t0 = std::clamp((-B - sd) / A, 0.0, 1.0), t1 = std::clamp((-B + sd) / A, 0.0, 1.0);
    if (t0 >= t1) {
      total += 0.5 * rho * rho * angle(p, q);
      continue;
    }
    const Eigen::Vector2d z0 = p + t0 * d, z1 = p + t1 * d;
    total += 0.5 * cross(z0, z1) + 0.5 * rho * rho * (angle(p, z0) + angle(z1, q));
  }
  return std::abs(total);
}

}  // namespace detail

/// Integral varifold carried by a simplicial complex with integer multiplicities.
class SimplicialVarifold {
 public:
  SimplicialVarifold() = default;

  SimplicialVarifold(int n, int m, std::vector<Point> vertices, std::vector<std::vector<int>> simplices,
                     std::vector<int> multiplicity = {}, double quadrature_h = 0.01)
      : n_(n), m_(m), verts_(std::move(vertices)), simp_(std::move(simplices)), mult_(std::move(multiplicity)),
        h_(quadrature_h) {
    if (n_ <= 0 || m_ < 1 || m_ > n_) throw DimensionError("SimplicialVarifold: need 1 <= m <= n");
    if (!(h_ > 0 && h_ < 1)) throw std::invalid_argument("SimplicialVarifold: quadrature_h must lie in (0,1)");
    if (mult_.empty()) mult_.assign(simp_.size(), 1);
    if (mult_.size() != simp_.size()) throw std::invalid_argument("SimplicialVarifold: multiplicity count");
    apex_h_ = h_;
    if (m_ >= 3) face_rule_ = detail::grundmann_moller(m_ - 1, 6);
    for (const auto& v : verts_) {
      require_same_dim(v.size(), n_, "SimplicialVarifold vertex");
      require_finite(v, "SimplicialVarifold vertex");
    }
    vol_.resize(simp_.size());
    tangent_.resize(simp_.size());
    centre_.resize(simp_.size());
    radius_.resize(simp_.size());
    for (size_t j = 0; j < simp_.size(); ++j) {
      const auto& s = simp_[j];
      if (static_cast<int>(s.size()) != m_ + 1) throw std::invalid_argument("SimplicialVarifold: simplex arity");
      for (int id : s)
        if (id < 0 || static_cast<size_t>(id) >= verts_.size())
          throw std::invalid_argument("SimplicialVarifold: vertex id out of range");
      if (mult_[j] < 1) throw std::invalid_argument("SimplicialVarifold: multiplicity must be >= 1");
      Mat e(n_, m_);
      for (int i = 0; i < m_; ++i) e.col(i) = verts_[static_cast<size_t>(s[static_cast<size_t>(i) + 1])] - verts_[static_cast<size_t>(s[0])];
      const double g = (e.transpose() * e).determinant();
      const double scale = e.colwise().norm().prod();
      if (!(g > 1e-24 * scale * scale) || scale == 0)
        throw std::invalid_argument("SimplicialVarifold: degenerate simplex " + std::to_string(j));
      vol_[j] = std::sqrt(g) / std::tgamma(m_ + 1.0);
      tangent_[j] = LinearSubspace::span(e).frame();
      if (tangent_[j].cols() != m_) throw std::invalid_argument("SimplicialVarifold: degenerate simplex");
      Vec c = Vec::Zero(n_);
      for (int id : s) c += verts_[static_cast<size_t>(id)];
      c /= (m_ + 1);
      double R = 0;
      for (int id : s) R = std::max(R, (verts_[static_cast<size_t>(id)] - c).norm());
      centre_[j] = c;
      radius_[j] = R;
    }
  }

  int ambient_dim() const { return n_; }
  int dim() const { return m_; }
  size_t size() const { return simp_.size(); }
  const std::vector<Point>& vertices() const { return verts_; }
  const std::vector<std::vector<int>>& simplices() const { return simp_; }
  const std::vector<int>& multiplicities() const { return mult_; }
  double quadrature_h() const { return h_; }
  double simplex_volume(size_t j) const { return vol_[j]; }
  const Mat& tangent(size_t j) const { return tangent_[j]; }

  /// Relative leaf size used when integrating over simplices that have x as a vertex.
  void set_apex_resolution(double a) { apex_h_ = a; }

  SimplicialVarifold with_quadrature_h(double h) const {
    SimplicialVarifold v = *this;
    if (!(h > 0 && h < 1)) throw std::invalid_argument("quadrature_h must lie in (0,1)");
    v.apex_h_ = apex_h_ == h_ ? h : apex_h_;
    v.h_ = h;
    return v;
  }

  double total_mass() const {
    double s = 0;
    for (size_t j = 0; j < simp_.size(); ++j) s += mult_[j] * vol_[j];
    return s;
  }

  /// mu(B_r(x)) for the closed ball.
  double mass(const Point& x, double r) const {
    require_same_dim(x.size(), n_, "mass");
    if (!(r > 0)) throw std::invalid_argument("mass: r must be positive");
    return shell_mass(x, 0.0, r);
  }

  /// Mass of the annulus s < |y - x| <= r.
  double shell_mass(const Point& x, double s, double r) const {
    double total = 0;
    const detail::Shell sh{x.data(), s, r};
    for (size_t j = 0; j < simp_.size(); ++j)
      if (touches(j, sh)) total += mult_[j] * region_volume(j, sh);
    return total;
  }

  /// Integral over the annulus of |pi_N (y - x)|^2 / |y - x|^{m+2}.
  double defect(const Point& x, double s, double r) const {
    require_same_dim(x.size(), n_, "defect");
    if (!(s > 0 && s < r)) throw std::invalid_argument("defect: need 0 < s < r");
    const detail::Shell sh{x.data(), s, r};
    double total = 0;
    for (size_t j = 0; j < simp_.size(); ++j)
      if (touches(j, sh)) total += mult_[j] * region_defect(j, sh);
    return total;
  }

  NormalMoment normal_moment(const Point& x, double s, double r) const {
    require_same_dim(x.size(), n_, "normal_moment");
    const detail::Shell sh{x.data(), s, r};
    NormalMoment out{0.0, Mat::Zero(n_, n_)};
    for (size_t j = 0; j < simp_.size(); ++j) {
      if (!touches(j, sh)) continue;
      const double w = mult_[j] * region_volume(j, sh);
      if (w <= 0) continue;
      out.mass += w;
      out.q += w * (Mat::Identity(n_, n_) - tangent_[j] * tangent_[j].transpose());
    }
    return out;
  }

  /// Points of the support in B_r(x), roughly spacing apart.
  std::vector<Point> support_samples(const Point& x, double r, double spacing) const {
    std::vector<Point> out;
    const detail::Shell sh{x.data(), 0.0, r};
    for (size_t j = 0; j < simp_.size(); ++j) {
      if (!touches(j, sh)) continue;
      for (int id : simp_[j])
        if ((verts_[static_cast<size_t>(id)] - x).norm() <= r) out.push_back(verts_[static_cast<size_t>(id)]);
      for_each_cell(j, spacing, [&](const Mat& p, double) {
        const Vec c = p.rowwise().mean();
        if ((c - x).norm() <= r) out.push_back(c);
      });
    }
    return out;
  }

  /// Visits cells of simplex j refined by longest-edge bisection until diameter <= leaf.
  template <class F>
  void for_each_cell(size_t j, double leaf, F&& f) const {
    std::vector<std::pair<Mat, double>> stack;
    stack.emplace_back(simplex_points(j), vol_[j]);
    while (!stack.empty()) {
      auto [p, v] = std::move(stack.back());
      stack.pop_back();
      int a = 0, b = 1;
      const double diam = longest_edge(p, a, b);
      if (diam <= leaf) {
        f(p, v);
        continue;
      }
      Mat q = p;
      const Vec mid = 0.5 * (p.col(a) + p.col(b));
      p.col(b) = mid;
      q.col(a) = mid;
      stack.emplace_back(std::move(p), v / 2);
      stack.emplace_back(std::move(q), v / 2);
    }
  }

  Mat simplex_points(size_t j) const {
    Mat p(n_, m_ + 1);
    for (int i = 0; i <= m_; ++i) p.col(i) = verts_[static_cast<size_t>(simp_[j][static_cast<size_t>(i)])];
    return p;
  }

 private:
  static double longest_edge(const Mat& p, int& a, int& b) {
    double best = -1;
    for (Eigen::Index i = 0; i < p.cols(); ++i)
      for (Eigen::Index k = i + 1; k < p.cols(); ++k) {
        const double d = (p.col(i) - p.col(k)).squaredNorm();
        if (d > best) {
          best = d;
          a = static_cast<int>(i);
          b = static_cast<int>(k);
        }
      }
    return std::sqrt(best);
  }

  bool touches(size_t j, const detail::Shell& sh) const {
    double d2 = 0;
    for (int d = 0; d < n_; ++d) d2 += detail::sq(centre_[j](d) - sh.x[d]);
    return std::sqrt(d2) - radius_[j] <= sh.r;
  }

  struct CellBounds {
    double lo, hi;
  };

  CellBounds bounds(const Mat& p, const double* x) const {
    const Vec c = p.rowwise().mean();
    double R = 0, hi = 0, d = 0;
    for (int k = 0; k < n_; ++k) d += detail::sq(c(k) - x[k]);
    d = std::sqrt(d);
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      R = std::max(R, (p.col(i) - c).norm());
      double e = 0;
      for (int k = 0; k < n_; ++k) e += detail::sq(p(k, i) - x[k]);
      hi = std::max(hi, std::sqrt(e));
    }
    return {std::max(0.0, d - R), hi};
  }

  int apex_vertex(size_t j, const double* x) const {
    double sx = 0;
    for (int d = 0; d < n_; ++d) sx = std::max(sx, std::abs(x[d]));
    for (int i = 0; i <= m_; ++i) {
      const Point& v = verts_[static_cast<size_t>(simp_[j][static_cast<size_t>(i)])];
      double e = 0;
      for (int d = 0; d < n_; ++d) e = std::max(e, std::abs(v(d) - x[d]));
      if (e <= 1e-13 * (1 + sx)) return i;
    }
    return -1;
  }

  double region_volume(size_t j, const detail::Shell& sh) const {
    const Mat p = simplex_points(j);
    if (m_ == 1) {
      std::array<std::pair<double, double>, 2> iv;
      const int c = detail::segment_shell(p.col(0), p.col(1), sh, iv);
      double t = 0;
      for (int i = 0; i < c; ++i) t += iv[static_cast<size_t>(i)].second - iv[static_cast<size_t>(i)].first;
      return t * vol_[j];
    }
    if (m_ == 2) {
      std::array<Eigen::Vector2d, 3> tri;
      Eigen::Vector2d foot;
      double off2;
      planar(p, sh.x, j, tri, foot, off2);
      const double ar = detail::disk_triangle_area(tri, foot, std::sqrt(std::max(0.0, sh.r * sh.r - off2)));
      const double as = sh.s > 0 ? detail::disk_triangle_area(tri, foot, std::sqrt(std::max(0.0, sh.s * sh.s - off2))) : 0.0;
      return std::max(0.0, ar - as);
    }
    const int apex = apex_vertex(j, sh.x);
    if (apex >= 0) return apex_volume(j, apex, sh);
    return cell_volume(p, vol_[j], sh, j);
  }

  double cell_volume(const Mat& p0, double v0, const detail::Shell& sh, size_t j) const {
    double total = 0;
    std::vector<std::pair<Mat, double>> stack;
    stack.emplace_back(p0, v0);
    while (!stack.empty()) {
      auto [p, v] = std::move(stack.back());
      stack.pop_back();
      const CellBounds b = bounds(p, sh.x);
      if (b.lo > sh.r || b.hi <= sh.s) continue;
      if (b.hi <= sh.r && b.lo > sh.s) {
        total += v;
        continue;
      }
      double leaf = std::numeric_limits<double>::infinity();
      if (b.lo <= sh.r && b.hi > sh.r) leaf = std::min(leaf, h_ * sh.r);
      if (sh.s > 0 && b.lo <= sh.s && b.hi > sh.s) leaf = std::min(leaf, h_ * sh.s);
      int a = 0, c = 1;
      const double diam = longest_edge(p, a, c);
      if (diam <= leaf) {
        total += leaf_volume(p, v, sh, j);
        continue;
      }
      Mat q = p;
      const Vec mid = 0.5 * (p.col(a) + p.col(c));
      p.col(c) = mid;
      q.col(a) = mid;
      stack.emplace_back(std::move(p), v / 2);
      stack.emplace_back(std::move(q), v / 2);
    }
    return total;
  }

  // In-plane coordinates of a triangle cell and of the foot of x.
  void planar(const Mat& p, const double* x, size_t j, std::array<Eigen::Vector2d, 3>& tri, Eigen::Vector2d& foot,
              double& off2) const {
    const Mat& t = tangent_[j];
    const Vec o = p.col(0);
    for (int i = 0; i < 3; ++i) tri[static_cast<size_t>(i)] = (t.transpose() * (p.col(i) - o)).head<2>();
    const Vec xv = Eigen::Map<const Vec>(x, n_) - o;
    const Vec fx = t.transpose() * xv;
    foot = fx.head<2>();
    off2 = std::max(0.0, xv.squaredNorm() - fx.squaredNorm());
  }

  // Clipped area and in-plane centroid of the shell part of a triangle.
  void leaf_triangle(const Mat& p, const detail::Shell& sh, size_t j, double& area, Eigen::Vector2d& cen,
                     std::array<Eigen::Vector2d, 3>& tri) const {
    Eigen::Vector2d foot;
    double off2;
    planar(p, sh.x, j, tri, foot, off2);
    double ar = 0, as = 0;
    Eigen::Vector2d mr, ms = Eigen::Vector2d::Zero();
    detail::clip_triangle_disk(tri, foot, std::sqrt(std::max(0.0, sh.r * sh.r - off2)), ar, mr);
    if (sh.s > 0) detail::clip_triangle_disk(tri, foot, std::sqrt(std::max(0.0, sh.s * sh.s - off2)), as, ms);
    area = std::max(0.0, ar - as);
    cen = area > 0 ? Eigen::Vector2d((mr - ms) / (ar - as)) : Eigen::Vector2d::Zero();
  }

  double leaf_volume(const Mat& p, double v, const detail::Shell& sh, size_t j) const {
    if (m_ == 2) {
      double area;
      Eigen::Vector2d cen;
      std::array<Eigen::Vector2d, 3> tri;
      leaf_triangle(p, sh, j, area, cen, tri);
      // The chord polygon lives in the cell's plane; rescale to the cell's exact area.
      const double full = 0.5 * std::abs((tri[1] - tri[0]).x() * (tri[2] - tri[0]).y() -
                                         (tri[1] - tri[0]).y() * (tri[2] - tri[0]).x());
      return full > 0 ? v * std::min(1.0, area / full) : 0.0;
    }
    const Vec c = p.rowwise().mean();
    double d = 0;
    for (int k = 0; k < n_; ++k) d += detail::sq(c(k) - sh.x[k]);
    d = std::sqrt(d);
    return (d <= sh.r && d > sh.s) ? v : 0.0;
  }

  // Simplex with x as vertex `apex`: y = x + t (z - x), z on the opposite face F.
  double apex_volume(size_t j, int apex, const detail::Shell& sh) const {
    const Mat p = simplex_points(j);
    Mat f(n_, m_);
    for (int i = 0, c = 0; i <= m_; ++i)
      if (i != apex) f.col(c++) = p.col(i);
    const Vec xv = p.col(apex);
    const double vf = vol_[j] * m_;  // h_F * |F| = m * vol
    // Every point of F is at least the height of x over aff(F) away from x.
    const Mat e = f.rightCols(m_ - 1).colwise() - f.col(0);
    const Vec w = xv - f.col(0);
    const double height = (w - e * e.colPivHouseholderQr().solve(w)).norm();
    double total = 0;
    std::vector<std::pair<Mat, double>> stack;
    stack.emplace_back(f, 1.0);
    while (!stack.empty()) {
      auto [q, frac] = std::move(stack.back());
      stack.pop_back();
      CellBounds b = bounds(q, xv.data());
      b.lo = std::max(b.lo, height);
      if (b.hi <= sh.s) continue;
      const bool straddle = (b.lo < sh.r && b.hi > sh.r) || (sh.s > 0 && b.lo < sh.s && b.hi > sh.s);
      int a = 0, c = 1;
      const double diam = q.cols() > 1 ? longest_edge(q, a, c) : 0.0;
      const double leaf = straddle ? h_ * (b.lo < sh.r && b.hi > sh.r ? sh.r : sh.s) : apex_h_ * b.hi;
      if (diam <= leaf || q.cols() == 1) {
        auto g = [&](const Vec& z) {
          const double l = (z - xv).norm();
          const double t1 = std::min(1.0, sh.r / l), t0 = std::min(1.0, sh.s / l);
          return std::pow(t1, m_) - std::pow(t0, m_);
        };
        double avg = 0;
        if (straddle) {
          avg = g(q.rowwise().mean());
        } else {
          const Mat z = q * face_rule_.bary;
          for (Eigen::Index k = 0; k < z.cols(); ++k) avg += face_rule_.weight(k) * g(z.col(k));
        }
        total += frac * vf * avg / m_;
        continue;
      }
      Mat q2 = q;
      const Vec mid = 0.5 * (q.col(a) + q.col(c));
      q.col(c) = mid;
      q2.col(a) = mid;
      stack.emplace_back(std::move(q), frac / 2);
      stack.emplace_back(std::move(q2), frac / 2);
    }
    return total;
  }

  double integrand(const Vec& y, const double* x, size_t j) const {
    const Vec d = y - Eigen::Map<const Vec>(x, n_);
    const Vec tn = tangent_[j].transpose() * d;
    const double dn2 = std::max(0.0, d.squaredNorm() - tn.squaredNorm());
    return dn2 / std::pow(d.squaredNorm(), 0.5 * (m_ + 2));
  }

  double region_defect(size_t j, const detail::Shell& sh) const {
    const Mat p0 = simplex_points(j);
    if (m_ == 1) {
      static const double gx[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
      static const double gw[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
      std::array<std::pair<double, double>, 2> iv;
      const int c = detail::segment_shell(p0.col(0), p0.col(1), sh, iv);
      const Vec a = p0.col(0), e = p0.col(1) - p0.col(0);
      const Vec xv = Eigen::Map<const Vec>(sh.x, n_);
      double total = 0;
      for (int i = 0; i < c; ++i) {
        double t = iv[static_cast<size_t>(i)].first;
        const double tend = iv[static_cast<size_t>(i)].second;
        while (t < tend) {
          const double dist = std::max(sh.s, (a + t * e - xv).norm());
          const double step = std::min(tend - t, h_ * dist / e.norm());
          for (int g = 0; g < 3; ++g) {
            const double tt = t + 0.5 * step * (1 + gx[g]);
            total += 0.5 * step * gw[g] * integrand(a + tt * e, sh.x, j);
          }
          t += step;
        }
      }
      return total * vol_[j];
    }
    if (apex_vertex(j, sh.x) >= 0) return 0.0;  // y - x is tangent on the whole simplex
    double total = 0;
    std::vector<std::pair<Mat, double>> stack;
    stack.emplace_back(p0, vol_[j]);
    while (!stack.empty()) {
      auto [p, v] = std::move(stack.back());
      stack.pop_back();
      const CellBounds b = bounds(p, sh.x);
      if (b.lo > sh.r || b.hi <= sh.s) continue;
      const bool inside = b.hi <= sh.r && b.lo > sh.s;
      double leaf = h_ * std::max(b.lo, sh.s);
      if (!inside) {
        if (b.lo <= sh.r && b.hi > sh.r) leaf = std::min(leaf, h_ * sh.r);
        if (b.lo <= sh.s && b.hi > sh.s) leaf = std::min(leaf, h_ * sh.s);
      }
      int a = 0, c = 1;
      const double diam = longest_edge(p, a, c);
      if (diam <= leaf) {
        if (inside) {
          total += v * integrand(p.rowwise().mean(), sh.x, j);
        } else if (m_ == 2) {
          double area;
          Eigen::Vector2d cen;
          std::array<Eigen::Vector2d, 3> tri;
          leaf_triangle(p, sh, j, area, cen, tri);
          if (area > 0) {
            const double full = 0.5 * std::abs((tri[1] - tri[0]).x() * (tri[2] - tri[0]).y() -
                                               (tri[1] - tri[0]).y() * (tri[2] - tri[0]).x());
            const Vec y = p.col(0) + tangent_[j].leftCols(2) * cen;
            total += v * std::min(1.0, area / full) * integrand(y, sh.x, j);
          }
        } else {
          const Vec c0 = p.rowwise().mean();
          double d = 0;
          for (int k = 0; k < n_; ++k) d += detail::sq(c0(k) - sh.x[k]);
          d = std::sqrt(d);
          if (d <= sh.r && d > sh.s) total += v * integrand(c0, sh.x, j);
        }
        continue;
      }
      Mat q = p;
      const Vec mid = 0.5 * (p.col(a) + p.col(c));
      p.col(c) = mid;
      q.col(a) = mid;
      stack.emplace_back(std::move(p), v / 2);
      stack.emplace_back(std::move(q), v / 2);
    }
    return total;
  }

  int n_ = 0, m_ = 0;
  std::vector<Point> verts_;
  std::vector<std::vector<int>> simp_;
  std::vector<int> mult_;
  double h_ = 0.01;
  double apex_h_ = 0.01;
  detail::SimplexRule face_rule_ = detail::grundmann_moller(0, 0);
  std::vector<double> vol_;
  std::vector<Mat> tangent_;
  std::vector<Vec> centre_;
  std::vector<double> radius_;
};

// ---------------------------------------------------------------------------------------------
// Quantities shared by every varifold model. V provides dim(), mass(x,r), defect(x,s,r) and
// normal_moment(x,s,r).

template <class V>
double density(const V& v, const Point& x, double r) {
  return v.mass(x, r) / std::pow(r, v.dim());
}

/// theta_r(y) for y on the support; models with a cheaper evaluation overload this.
template <class V>
double support_density(const V& v, const Point& y, double r) {
  return density(v, y, r);
}

struct DensityCurve {
  Point center;
  std::vector<double> r;
  std::vector<double> theta;
};

template <class V>
DensityCurve density_curve(const V& v, const Point& x, const std::vector<double>& radii) {
  DensityCurve c{x, radii, {}};
  for (double r : radii) c.theta.push_back(density(v, x, r));
  return c;
}

template <class V>
double mass_drop(const V& v, const Point& x, double s, double r) {
  if (!(s > 0 && s <= r)) throw std::invalid_argument("mass_drop: need 0 < s <= r");
  return density(v, x, r) - density(v, x, s);
}

/// The annulus integral whose value equals mass_drop on stationary varifolds.
template <class V>
double monotonicity_defect(const V& v, const Point& x, double s, double r) {
  return v.defect(x, s, r);
}

struct SpineScore {
  double score = 0;
  LinearSubspace subspace;  // minimizing (k+1)-subspace
  Vec eigenvalues;          // of the normalized Q, descending
};

/// Sum of the k+1 smallest eigenvalues of the normalized normal-projector moment over A(3r/8, r/2).
template <class V>
SpineScore spine_score(const V& v, const Point& x, double r, int k) {
  if (k < 0 || k > v.dim() - 1) throw std::invalid_argument("spine_score: need 0 <= k <= m-1");
  const NormalMoment nm = v.normal_moment(x, 0.375 * r, 0.5 * r);
  if (!(nm.mass > 0)) throw std::invalid_argument("spine_score: empty annulus");
  const SymEigen e = sym_eigen(nm.q / nm.mass);
  const Eigen::Index n = e.values.size();
  SpineScore out;
  out.eigenvalues = e.values;
  for (Eigen::Index i = 0; i <= k; ++i) out.score += std::max(0.0, e.values(n - 1 - i));
  out.subspace = LinearSubspace::span(e.vectors.rightCols(k + 1));
  return out;
}

struct SymmetryResult {
  bool symmetric = false;
  double pinch = 0;
  double spine = 0;
};

/// Proxy for a (k, eps)-symmetric ball: small density pinch on [r/8, r], and for k >= 1 a small
/// (k-1)-spine score.
template <class V>
SymmetryResult symmetry_details(const V& v, const Point& x, double r, int k, double eps) {
  SymmetryResult out;
  out.pinch = std::abs(density(v, x, r) - density(v, x, r / 8));
  if (out.pinch >= eps) return out;
  if (k >= 1) {
    const double nm = v.normal_moment(x, 0.375 * r, 0.5 * r).mass;
    if (!(nm > 0)) return out;
    out.spine = spine_score(v, x, r, std::min(k - 1, v.dim() - 1)).score;
    if (out.spine >= eps) return out;
  }
  out.symmetric = true;
  return out;
}

template <class V>
bool symmetry_test(const V& v, const Point& x, double r, int k, double eps) {
  return symmetry_details(v, x, r, k, eps).symmetric;
}

/// Atoms at centroids of cells after `level` rounds of bisection; weights are multiplicity times volume.
inline WeightedPointMeasure to_measure(const SimplicialVarifold& v, int level = 0) {
  std::vector<double> c, w;
  const int n = v.ambient_dim();
  for (size_t j = 0; j < v.size(); ++j) {
    std::vector<std::pair<Mat, double>> cells{{v.simplex_points(j), v.simplex_volume(j)}};
    for (int l = 0; l < level; ++l) {
      std::vector<std::pair<Mat, double>> next;
      for (auto& [p, vol] : cells) {
        int a = 0, b = 1;
        double best = -1;
        for (Eigen::Index i = 0; i < p.cols(); ++i)
          for (Eigen::Index k = i + 1; k < p.cols(); ++k)
            if ((p.col(i) - p.col(k)).squaredNorm() > best) {
              best = (p.col(i) - p.col(k)).squaredNorm();
              a = static_cast<int>(i);
              b = static_cast<int>(k);
            }
        Mat q = p;
        const Vec mid = 0.5 * (p.col(a) + p.col(b));
        q.col(a) = mid;
        Mat r = p;
        r.col(b) = mid;
        next.emplace_back(std::move(r), vol / 2);
        next.emplace_back(std::move(q), vol / 2);
      }
      cells.swap(next);
    }
    for (auto& [p, vol] : cells) {
      const Vec ctr = p.rowwise().mean();
      c.insert(c.end(), ctr.data(), ctr.data() + n);
      w.push_back(v.multiplicities()[j] * vol);
    }
  }
  if (n == 0) return WeightedPointMeasure(0);
  return WeightedPointMeasure(n, std::move(c), std::move(w));
}

// ---------------------------------------------------------------------------------------------
// Mesh file: "SOFF n m" / "V S" / vertex lines / "i0 ... im multiplicity" lines.

inline void write_off(std::ostream& os, const SimplicialVarifold& v) {
  os << "SOFF " << v.ambient_dim() << ' ' << v.dim() << '\n';
  os << v.vertices().size() << ' ' << v.size() << '\n';
  os.precision(17);
  for (const auto& p : v.vertices()) {
    for (Eigen::Index d = 0; d < p.size(); ++d) os << (d ? " " : "") << p(d);
    os << '\n';
  }
  for (size_t j = 0; j < v.size(); ++j) {
    for (int id : v.simplices()[j]) os << id << ' ';
    os << v.multiplicities()[j] << '\n';
  }
}

inline SimplicialVarifold read_off(std::istream& in, const std::string& name = "mesh", double h = 0.01) {
  std::string line;
  size_t lineno = 0;
  auto next = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++lineno;
      const auto p = line.find_first_not_of(" \t\r");
      if (p == std::string::npos || line[p] == '#') continue;
      return std::istringstream(line);
    }
    throw InputError(name + ": unexpected end of file after line " + std::to_string(lineno));
  };
  auto fail = [&](const std::string& what) { throw InputError(name + ":" + std::to_string(lineno) + ": " + what); };
  int n = 0, m = 0;
  {
    auto ls = next();
    std::string tag;
    if (!(ls >> tag >> n >> m) || tag != "SOFF" || n <= 0 || m < 1 || m > n) fail("expected 'SOFF n m'");
  }
  size_t nv = 0, ns = 0;
  {
    auto ls = next();
    if (!(ls >> nv >> ns)) fail("expected vertex and simplex counts");
  }
  std::vector<Point> verts(nv, Point(n));
  for (size_t i = 0; i < nv; ++i) {
    auto ls = next();
    for (int d = 0; d < n; ++d)
      if (!(ls >> verts[i](d)) || !std::isfinite(verts[i](d))) fail("bad vertex coordinate");
    std::string extra;
    if (ls >> extra) fail("too many vertex coordinates");
  }
  std::vector<std::vector<int>> simp(ns, std::vector<int>(static_cast<size_t>(m + 1)));
  std::vector<int> mult(ns);
  for (size_t j = 0; j < ns; ++j) {
    auto ls = next();
    for (int i = 0; i <= m; ++i) {
      if (!(ls >> simp[j][static_cast<size_t>(i)])) fail("bad simplex entry");
      if (simp[j][static_cast<size_t>(i)] < 0 || static_cast<size_t>(simp[j][static_cast<size_t>(i)]) >= nv)
        fail("vertex id out of range");
    }
    if (!(ls >> mult[j]) || mult[j] < 1) fail("multiplicity must be a positive integer");
  }
  try {
    return SimplicialVarifold(n, m, std::move(verts), std::move(simp), std::move(mult), h);
  } catch (const std::invalid_argument& e) {
    throw InputError(name + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------------------------
// Generators

namespace gen {

/// Kuhn triangulation of the cube [-L, L]^m with `cells` cubes per side, mapped by base + frame u.
inline SimplicialVarifold plane(const Mat& frame, const Point& base, double L, int cells, double h = 0.01) {
  const int n = static_cast<int>(frame.rows()), m = static_cast<int>(frame.cols());
  if (cells < 1) throw std::invalid_argument("plane: cells must be >= 1");
  const int side = cells + 1;
  int total = 1;
  for (int d = 0; d < m; ++d) total *= side;
  std::vector<Point> verts;
  verts.reserve(static_cast<size_t>(total));
  for (int v = 0; v < total; ++v) {
    int t = v;
    Vec u(m);
    for (int d = 0; d < m; ++d) {
      u(d) = -L + 2 * L * (t % side) / cells;
      t /= side;
    }
    verts.push_back(base + frame * u);
  }
  std::vector<int> perm(static_cast<size_t>(m));
  std::vector<std::vector<int>> simp;
  int ncube = 1;
  for (int d = 0; d < m; ++d) ncube *= cells;
  for (int cidx = 0; cidx < ncube; ++cidx) {
    int t = cidx;
    std::vector<int> corner(static_cast<size_t>(m));
    for (int d = 0; d < m; ++d) {
      corner[static_cast<size_t>(d)] = t % cells;
      t /= cells;
    }
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<int> s;
      std::vector<int> cur = corner;
      auto id = [&]() {
        int k = 0;
        for (int d = m - 1; d >= 0; --d) k = k * side + cur[static_cast<size_t>(d)];
        return k;
      };
      s.push_back(id());
      for (int d : perm) {
        ++cur[static_cast<size_t>(d)];
        s.push_back(id());
      }
      simp.push_back(s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return SimplicialVarifold(n, m, std::move(verts), std::move(simp), {}, h);
}

/// Coordinate m-plane through the origin in R^n.
inline SimplicialVarifold coordinate_plane(int n, int m, double L = 1.5, int cells = 6, double h = 0.01) {
  Mat f = Mat::Zero(n, m);
  for (int d = 0; d < m; ++d) f(d, d) = 1;
  return plane(f, Point::Zero(n), L, cells, h);
}

/// Disjoint union of simplicial varifolds of equal dimensions.
inline SimplicialVarifold disjoint_union(const std::vector<SimplicialVarifold>& parts, double h = 0.01) {
  if (parts.empty()) throw std::invalid_argument("union: no parts");
  std::vector<Point> verts;
  std::vector<std::vector<int>> simp;
  std::vector<int> mult;
  for (const auto& p : parts) {
    if (p.ambient_dim() != parts[0].ambient_dim() || p.dim() != parts[0].dim())
      throw DimensionError("union: parts differ in dimension");
    const int off = static_cast<int>(verts.size());
    verts.insert(verts.end(), p.vertices().begin(), p.vertices().end());
    for (size_t j = 0; j < p.size(); ++j) {
      auto s = p.simplices()[j];
      for (int& id : s) id += off;
      simp.push_back(s);
      mult.push_back(p.multiplicities()[j]);
    }
  }
  return SimplicialVarifold(parts[0].ambient_dim(), parts[0].dim(), std::move(verts), std::move(simp), std::move(mult),
                            h);
}

/// Union of planes through the origin given by their frames.
inline SimplicialVarifold union_of_planes(const std::vector<Mat>& frames, double L = 1.5, int cells = 6,
                                          double h = 0.01) {
  std::vector<SimplicialVarifold> parts;
  for (const auto& f : frames) parts.push_back(plane(f, Point::Zero(f.rows()), L, cells, h));
  return disjoint_union(parts, h);
}

/// Cone with vertex 0 over a link complex on the unit sphere, truncated at radius R.
inline SimplicialVarifold cone_over_link(const std::vector<Point>& link_vertices,
                                         const std::vector<std::vector<int>>& link_simplices, double R = 2.0,
                                         double h = 0.01) {
  if (link_vertices.empty()) throw std::invalid_argument("cone: empty link");
  const int n = static_cast<int>(link_vertices[0].size());
  std::vector<Point> verts{Point::Zero(n)};
  for (const auto& v : link_vertices) verts.push_back(R * v / v.norm());
  std::vector<std::vector<int>> simp;
  for (const auto& s : link_simplices) {
    std::vector<int> t{0};
    for (int id : s) t.push_back(id + 1);
    simp.push_back(t);
  }
  const int m = static_cast<int>(link_simplices.at(0).size());
  return SimplicialVarifold(n, m, std::move(verts), std::move(simp), {}, h);
}

/// Three rays at 120 degrees in R^2.
inline SimplicialVarifold y_cone(double R = 2.0, double h = 0.01) {
  std::vector<Point> link;
  for (int i = 0; i < 3; ++i) {
    Point p(2);
    p << std::cos(2 * kPi * i / 3), std::sin(2 * kPi * i / 3);
    link.push_back(p);
  }
  return cone_over_link(link, {{0}, {1}, {2}}, R, h);
}

/// Cone over the geodesic net formed by the edges of a spherical regular tetrahedron.
inline SimplicialVarifold tetrahedral_cone(int arc_pieces = 8, double R = 2.0, double h = 0.01) {
  std::vector<Point> corners;
  for (auto c : std::vector<std::array<double, 3>>{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}) {
    Point p(3);
    p << c[0], c[1], c[2];
    corners.push_back(p / p.norm());
  }
  std::vector<Point> link = corners;
  std::vector<std::vector<int>> arcs;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      int prev = a;
      for (int i = 1; i <= arc_pieces; ++i) {
        int cur;
        if (i == arc_pieces) {
          cur = b;
        } else {
          const double t = static_cast<double>(i) / arc_pieces;
          const double om = std::acos(corners[static_cast<size_t>(a)].dot(corners[static_cast<size_t>(b)]));
          Point p = (std::sin((1 - t) * om) * corners[static_cast<size_t>(a)] +
                     std::sin(t * om) * corners[static_cast<size_t>(b)]) /
                    std::sin(om);
          link.push_back(p);
          cur = static_cast<int>(link.size()) - 1;
        }
        arcs.push_back({prev, cur});
        prev = cur;
      }
    }
  return cone_over_link(link, arcs, R, h);
}

/// Product of a simplicial varifold with the cube [-L, L]^k, appended as trailing coordinates.
inline SimplicialVarifold cylinder(const SimplicialVarifold& base, int k, double L = 1.5, int cells = 3,
                                   double h = 0.01) {
  SimplicialVarifold cur = base;
  for (int step = 0; step < k; ++step) {
    const int n = cur.ambient_dim() + 1, m = cur.dim() + 1;
    std::vector<Point> verts;
    const size_t nv = cur.vertices().size();
    for (int layer = 0; layer <= cells; ++layer) {
      const double z = -L + 2 * L * layer / cells;
      for (const auto& p : cur.vertices()) {
        Point q(n);
        q << p, z;
        verts.push_back(q);
      }
    }
    std::vector<std::vector<int>> simp;
    std::vector<int> mult;
    for (int layer = 0; layer < cells; ++layer)
      for (size_t j = 0; j < cur.size(); ++j) {
        const auto& s = cur.simplices()[j];
        // Staircase split of the prism s x [layer, layer+1].
        for (size_t i = 0; i < s.size(); ++i) {
          std::vector<int> t;
          for (size_t a = 0; a <= i; ++a) t.push_back(static_cast<int>(layer * nv) + s[a]);
          for (size_t a = i; a < s.size(); ++a) t.push_back(static_cast<int>((layer + 1) * nv) + s[a]);
          simp.push_back(t);
          mult.push_back(cur.multiplicities()[j]);
        }
      }
    cur = SimplicialVarifold(n, m, std::move(verts), std::move(simp), std::move(mult), h);
  }
  return cur;
}

/// Graph {(u, f(u))} over the square [-L, L]^2 in R^3.
inline SimplicialVarifold graph_surface(const std::function<double(double, double)>& f, double L = 1.0,
                                        int cells = 16, double h = 0.01) {
  Mat frame = Mat::Zero(3, 2);
  frame(0, 0) = frame(1, 1) = 1;
  const SimplicialVarifold flat = plane(frame, Point::Zero(3), L, cells, h);
  std::vector<Point> verts = flat.vertices();
  for (auto& p : verts) p(2) = f(p(0), p(1));
  return SimplicialVarifold(3, 2, std::move(verts), flat.simplices(), {}, h);
}

inline double snowflake_factor(double eta) { return (2.0 + std::sqrt(1.0 + 4.0 * eta * eta)) / 3.0; }

/// Length of the depth-d curve from the closed recursion.
inline double snowflake_length(const std::vector<double>& eta, int depth) {
  if (depth > static_cast<int>(eta.size())) throw std::invalid_argument("snowflake_length: eta sequence too short");
  double l = 1;
  for (int i = 0; i < depth; ++i) l *= snowflake_factor(eta[static_cast<size_t>(i)]);
  return l;
}

namespace detail {

inline bool segments_cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                           const Eigen::Vector2d& d) {
  auto orient = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
    return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
  };
  auto on_seg = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
    return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) && std::min(p.y(), q.y()) <= r.y() &&
           r.y() <= std::max(p.y(), q.y());
  };
  const double d1 = orient(c, d, a), d2 = orient(c, d, b), d3 = orient(a, b, c), d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_seg(c, d, a)) return true;
  if (d2 == 0 && on_seg(c, d, b)) return true;
  if (d3 == 0 && on_seg(a, b, c)) return true;
  if (d4 == 0 && on_seg(a, b, d)) return true;
  return false;
}

}  // namespace detail

/// True when no two non-adjacent segments of the open polyline meet.
inline bool polyline_is_embedded(const std::vector<Eigen::Vector2d>& p) {
  const size_t ns = p.size() < 2 ? 0 : p.size() - 1;
  if (ns < 2) return true;
  double len = 0;
  for (size_t i = 0; i < ns; ++i) len = std::max(len, (p[i + 1] - p[i]).norm());
  const double cell = std::max(len, 1e-300);
  std::unordered_map<long long, std::vector<size_t>> grid;
  auto key = [](long long i, long long j) { return i * 4000037LL + j; };
  for (size_t s = 0; s < ns; ++s) {
    const Eigen::Vector2d lo = p[s].cwiseMin(p[s + 1]), hi = p[s].cwiseMax(p[s + 1]);
    for (long long i = static_cast<long long>(std::floor(lo.x() / cell)); i <= static_cast<long long>(std::floor(hi.x() / cell)); ++i)
      for (long long j = static_cast<long long>(std::floor(lo.y() / cell)); j <= static_cast<long long>(std::floor(hi.y() / cell)); ++j)
        grid[key(i, j)].push_back(s);
  }
  for (const auto& [k, segs] : grid)
    for (size_t a = 0; a < segs.size(); ++a)
      for (size_t b = a + 1; b < segs.size(); ++b) {
        const size_t s = std::min(segs[a], segs[b]), t = std::max(segs[a], segs[b]);
        if (t == s + 1) continue;
        if (detail::segments_cross(p[s], p[s + 1], p[t], p[t + 1])) return false;
      }
  return true;
}

/// Vertices of the depth-d curve from (0,0) to (1,0).
inline std::vector<Eigen::Vector2d> snowflake_polyline(const std::vector<double>& eta, int depth) {
  if (depth < 0 || depth > static_cast<int>(eta.size())) throw std::invalid_argument("snowflake: eta sequence too short");
  if (depth > 12) throw std::invalid_argument("snowflake: depth above 12 is not supported");
  std::vector<Eigen::Vector2d> p{{0, 0}, {1, 0}};
  for (int i = 0; i < depth; ++i) {
    const double e = eta[static_cast<size_t>(i)];
    if (!(e >= 0) || !std::isfinite(e)) throw std::invalid_argument("snowflake: eta must be nonnegative");
    std::vector<Eigen::Vector2d> q;
    q.reserve(4 * p.size());
    for (size_t s = 0; s + 1 < p.size(); ++s) {
      const Eigen::Vector2d a = p[s], d = p[s + 1] - p[s];
      const Eigen::Vector2d perp(-d.y(), d.x());
      q.push_back(a);
      q.push_back(a + d / 3);
      q.push_back(a + d / 2 + (e / 3) * perp);
      q.push_back(a + 2 * d / 3);
    }
    q.push_back(p.back());
    p.swap(q);
  }
  return p;
}

/// Snowflake curve as a 1-varifold in R^2. Rejects parameters whose curve self-intersects.
inline SimplicialVarifold snowflake(const std::vector<double>& eta, int depth, double h = 0.01) {
  const auto p = snowflake_polyline(eta, depth);
  if (!polyline_is_embedded(p)) throw std::invalid_argument("snowflake: parameters make the curve self-intersect");
  std::vector<Point> verts;
  verts.reserve(p.size());
  for (const auto& v : p) verts.push_back(Vec(v));
  std::vector<std::vector<int>> simp;
  simp.reserve(p.size() - 1);
  for (size_t s = 0; s + 1 < p.size(); ++s) simp.push_back({static_cast<int>(s), static_cast<int>(s + 1)});
  return SimplicialVarifold(2, 1, std::move(verts), std::move(simp), {}, h);
}

/// eta_i = i^{-p}, i = 1..depth.
inline std::vector<double> power_sequence(double p, int depth) {
  std::vector<double> e;
  for (int i = 1; i <= depth; ++i) e.push_back(std::pow(static_cast<double>(i), -p));
  return e;
}

}  // namespace gen

}  // namespace qs
