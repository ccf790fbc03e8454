#pragma once

#include "qstrat/measure.hpp"
#include "qstrat/parallel.hpp"
#include "qstrat/simons.hpp"
#include "qstrat/varifold.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace qs {

/// Dyadic scales 2^{-j} lying in [r, 1), largest first.
inline std::vector<double> dyadic_scales(double r) {
  if (!(r > 0 && r < 1)) throw std::invalid_argument("stratify: need 0 < r < 1");
  std::vector<double> s;
  for (double t = 0.5; t >= r * (1 - 1e-12); t *= 0.5) s.push_back(t);
  return s;
}

/// x is in S^k_{eps,r} iff no ball B_s(x), s dyadic in [r, 1), passes symmetry_test at level k+1.
template <class V>
bool stratum_label(const V& v, const Point& x, double eps, double r, int k) {
  if (k < 0 || k > v.dim() - 1) throw std::invalid_argument("stratum_label: need 0 <= k <= m-1");
  for (double s : dyadic_scales(r))
    if (symmetry_test(v, x, s, k + 1, eps)) return false;
  return true;
}

struct StratLabel {
  Point x;
  /// Per k in [0, m-1]: smallest dyadic s with a (k+1, eps)-symmetric ball.
  std::vector<std::optional<double>> symmetric_scale;

  /// Membership in S^k_{eps,r}; every point lies in S^m.
  bool in_stratum(int k) const {
    return k >= static_cast<int>(symmetric_scale.size()) || !symmetric_scale[static_cast<size_t>(k)].has_value();
  }
};

namespace detail {

// Symmetry levels of one ball: the largest j such that B_s(x) is (j, eps)-symmetric, -1 if none.
template <class V>
int symmetric_level(const V& v, const Point& x, double s, double eps) {
  const double pinch = std::abs(density(v, x, s) - density(v, x, s / 8));
  if (pinch >= eps) return -1;
  const NormalMoment nm = v.normal_moment(x, 0.375 * s, 0.5 * s);
  if (!(nm.mass > 0)) return 0;
  const Vec ev = sym_eigen(nm.q / nm.mass).values;
  const Eigen::Index n = ev.size();
  double cum = 0;
  int level = 0;
  for (int k = 0; k < v.dim(); ++k) {
    cum += std::max(0.0, ev(n - 1 - k));
    if (cum >= eps) break;
    level = k + 1;
  }
  return level;
}

}  // namespace detail

/// Labels every sample for k = 0..m-1 at once; one symmetry evaluation per dyadic scale.
template <class V>
std::vector<StratLabel> stratify_samples(const V& v, const std::vector<Point>& samples, double eps, double r) {
  const auto scales = dyadic_scales(r);
  const int m = v.dim();
  std::vector<StratLabel> out(samples.size());
  parallel_for(samples.size(), [&](size_t i) {
    StratLabel lab{samples[i], std::vector<std::optional<double>>(static_cast<size_t>(m))};
    for (double s : scales) {
      const int level = detail::symmetric_level(v, samples[i], s, eps);
      // A (j, eps)-symmetric ball disqualifies x from S^k for every k < j.
      for (int k = 0; k < std::min(level, m); ++k) lab.symmetric_scale[static_cast<size_t>(k)] = s;
    }
    out[i] = std::move(lab);
  });
  return out;
}

// ---------------------------------------------------------------------------------------------
// Content estimators

struct Box {
  Vec lo, hi;
  bool contains(const Point& p) const {
    for (Eigen::Index d = 0; d < p.size(); ++d)
      if (p(d) < lo(d) || p(d) > hi(d)) return false;
    return true;
  }
};

struct Estimate {
  double value = 0;
  double se = 0;
};

namespace detail {

inline WeightedPointMeasure index_points(const std::vector<Point>& s) {
  return WeightedPointMeasure::from_points(s, std::vector<double>(s.size(), 1.0));
}

// Lexicographic order of a point set, for deterministic greedy selections.
inline std::vector<size_t> lex_order(const std::vector<Point>& s) {
  std::vector<size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    for (Eigen::Index d = 0; d < s[a].size(); ++d)
      if (s[a](d) != s[b](d)) return s[a](d) < s[b](d);
    return false;
  });
  return idx;
}

}  // namespace detail

/// Monte-Carlo volume of B_r(S) cap box. Each sample is uniform in a uniformly chosen ball and is
/// weighted by 1 / (number of balls containing it), which is unbiased for the union.
inline Estimate tube_volume(const std::vector<Point>& s, double r, const std::optional<Box>& box = std::nullopt,
                            size_t n_mc = 20000, uint64_t seed = 1) {
  if (!(r > 0)) throw std::invalid_argument("tube_volume: r must be positive");
  if (n_mc < 10000) throw std::invalid_argument("tube_volume: need at least 10^4 samples");
  if (s.empty()) return {};
  const int n = static_cast<int>(s[0].size());
  const auto index = detail::index_points(s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<size_t> pick(0, s.size() - 1);
  double sum = 0, sum2 = 0;
  Vec dir(n);
  for (size_t t = 0; t < n_mc; ++t) {
    for (int d = 0; d < n; ++d) dir(d) = g(rng);
    const Point y = s[pick(rng)] + r * std::pow(u(rng), 1.0 / n) * dir / dir.norm();
    double f = 0;
    if (!box || box->contains(y)) {
      size_t cover = 0;
      index.for_each_in_ball(y, r, [&](size_t) { ++cover; });
      f = 1.0 / static_cast<double>(std::max<size_t>(cover, 1));
    }
    sum += f;
    sum2 += f * f;
  }
  const double total = static_cast<double>(s.size()) * omega(n) * std::pow(r, n);
  const double mean = sum / static_cast<double>(n_mc);
  const double var = std::max(0.0, sum2 / static_cast<double>(n_mc) - mean * mean);
  return {total * mean, total * std::sqrt(var / static_cast<double>(n_mc))};
}

struct ContentEstimate {
  double hausdorff = 0;  // greedy covering by sets of diameter <= 2r, each charged omega_k r^k
  Estimate minkowski;    // (2r)^{k-n} Vol(B_r(S))
  double packing = 0;    // greedy disjoint r-balls centred on S
  size_t cover_sets = 0, packing_balls = 0;
};

inline ContentEstimate content_estimates(const std::vector<Point>& s, double k, double r, size_t n_mc = 20000,
                                         uint64_t seed = 1) {
  if (!(r > 0) || !(k >= 0)) throw std::invalid_argument("content_estimates: need r > 0 and k >= 0");
  ContentEstimate out;
  if (s.empty()) return out;
  const int n = static_cast<int>(s[0].size());
  const auto index = detail::index_points(s);
  const auto order = detail::lex_order(s);
  const double charge = omega_real(k) * std::pow(r, k);

  std::vector<char> covered(s.size(), 0);
  for (size_t p : order) {
    if (covered[p]) continue;
    std::vector<std::pair<double, size_t>> cand;
    index.for_each_in_ball(s[p], 2 * r, [&](size_t q) {
      if (!covered[q]) cand.emplace_back((s[q] - s[p]).norm(), q);
    });
    std::sort(cand.begin(), cand.end());
    std::vector<size_t> set;
    for (const auto& [d, q] : cand) {
      bool ok = true;
      for (size_t e : set)
        if ((s[q] - s[e]).norm() > 2 * r) {
          ok = false;
          break;
        }
      if (ok) set.push_back(q);
    }
    covered[p] = 1;
    for (size_t q : set) covered[q] = 1;
    ++out.cover_sets;
  }
  out.hausdorff = static_cast<double>(out.cover_sets) * charge;

  std::vector<Point> centres;
  for (size_t p : order) {
    bool free = true;
    for (const auto& c : centres)
      if ((c - s[p]).norm() <= 2 * r) {
        free = false;
        break;
      }
    if (free) centres.push_back(s[p]);
  }
  out.packing_balls = centres.size();
  out.packing = static_cast<double>(centres.size()) * charge;

  const Estimate vol = tube_volume(s, r, std::nullopt, n_mc, seed);
  const double scale = std::pow(2 * r, k - n);
  out.minkowski = {vol.value * scale, vol.se * scale};
  return out;
}

// ---------------------------------------------------------------------------------------------
// Covering construction

struct CoverBall {
  Point center;
  double radius = 0;
  int round = 0;
  double sup_theta = 0;  // sampled sup over the ball of theta_radius
  double bound = 0;      // E - eta of the parent ball
};

struct CoveringRound {
  int round = 0;
  size_t parents = 0;
  size_t u_r = 0;
  size_t u_plus = 0;
  double sum_rk = 0;  // sum of radius^k over this round's U_+
  double max_energy = 0;
};

struct CoveringOptions {
  double scale_ratio = 0.8408964152537145;  // 2^{-1/4}, grid for the mass scale
  double sample_spacing = 0;                // relative to the ball radius; 0 means 10 * quadrature_h
  int max_rounds = 10000;
};

struct CoveringTree {
  int k = 0;
  double eps = 0, eta = 0, r = 0;
  double energy = 0;   // E = sup over B_1(p) of theta_1
  double lambda = 0;   // density bound, here E itself
  int round_bound = 0; // ceil(lambda / eta)
  int rounds = 0;
  bool terminated = false;
  std::vector<Point> stratum;           // samples of S^k_{eps, r/10} cap B_1(p)
  std::vector<CoverBall> u_r;
  std::vector<CoverBall> u_plus;        // all rounds
  std::vector<CoveringRound> per_round;
  bool certificates_ok = true;
  bool covers_stratum = false;          // every stratum sample lies in U_r cap (round-1 U_+)
  bool final_cover = false;             // and in U_r alone once U_+ is exhausted

  std::vector<CoverBall> u_plus_round(int round) const {
    std::vector<CoverBall> out;
    for (const auto& b : u_plus)
      if (b.round == round) out.push_back(b);
    return out;
  }
};

namespace detail {

template <class V>
double sampled_sup_density(const V& v, const Point& x, double radius, double scale, double spacing) {
  double best = 0;
  for (const auto& y : v.support_samples(x, radius, spacing)) best = std::max(best, support_density(v, y, scale));
  return best;
}

// Greedy selection of centres whose fifth-balls are disjoint; input already ordered.
inline std::vector<size_t> vitali_select(const std::vector<Point>& c, const std::vector<double>& rad,
                                         const std::vector<size_t>& order) {
  std::vector<size_t> chosen;
  for (size_t i : order) {
    bool ok = true;
    for (size_t j : chosen)
      if ((c[i] - c[j]).norm() < (rad[i] + rad[j]) / 5) {
        ok = false;
        break;
      }
    if (ok) chosen.push_back(i);
  }
  return chosen;
}

}  // namespace detail

/// Iterated covering of S^k_{eps,r/10} cap B_1(p): each round splits the current balls into r-balls
/// (mass scale reached r) and smaller balls with a definite drop of sup theta.
template <class V>
CoveringTree covering_construct(const V& v, const std::vector<Point>& samples, const Point& p, int k, double eps,
                                double eta, double r, const CoveringOptions& opt = {}) {
  if (k < 0 || k > v.dim() - 1) throw std::invalid_argument("covering_construct: need 0 <= k <= m-1");
  if (!(eps > 0)) throw std::invalid_argument("covering_construct: eps must be positive");
  if (!(eta > 0 && eta < 1)) throw std::invalid_argument("covering_construct: eta must lie in (0,1)");
  if (!(r > 0 && r < 1)) throw std::invalid_argument("covering_construct: need 0 < r < 1");
  if (!(opt.scale_ratio > 0 && opt.scale_ratio < 1)) throw std::invalid_argument("covering_construct: bad scale ratio");

  CoveringTree tree;
  tree.k = k;
  tree.eps = eps;
  tree.eta = eta;
  tree.r = r;
  const double rel = opt.sample_spacing > 0 ? opt.sample_spacing : 10 * v.quadrature_h();
  auto sup = [&](const Point& x, double radius, double scale) {
    return detail::sampled_sup_density(v, x, radius, scale, rel * radius);
  };

  std::vector<Point> inside;
  for (const auto& x : samples)
    if ((x - p).norm() <= 1.0) inside.push_back(x);
  for (const auto& lab : stratify_samples(v, inside, eps, r / 10))
    if (lab.in_stratum(k)) tree.stratum.push_back(lab.x);

  tree.energy = sup(p, 1.0, 1.0);
  tree.lambda = tree.energy;
  tree.round_bound = static_cast<int>(std::ceil(tree.lambda / eta - 1e-12));

  struct Parent {
    Point c;
    double radius, energy;
    std::vector<size_t> pts;
  };
  std::vector<Parent> parents;
  {
    Parent top{p, 1.0, tree.energy, {}};
    top.pts.resize(tree.stratum.size());
    std::iota(top.pts.begin(), top.pts.end(), 0);
    parents.push_back(std::move(top));
  }
  std::vector<size_t> ur_points;

  while (!parents.empty() && tree.rounds < opt.max_rounds) {
    ++tree.rounds;
    CoveringRound info;
    info.round = tree.rounds;
    info.parents = parents.size();
    std::vector<Parent> next;
    for (const auto& par : parents) {
      info.max_energy = std::max(info.max_energy, par.energy);
      const double threshold = par.energy - eta;
      std::vector<double> scales;
      for (double t = par.radius; t > r; t *= opt.scale_ratio) scales.push_back(t);
      scales.push_back(r);

      // First failing grid scale below the mass scale; 0 when the mass scale reaches r.
      std::vector<double> fail(par.pts.size(), 0.0);
      parallel_for(par.pts.size(), [&](size_t i) {
        const Point& x = tree.stratum[par.pts[i]];
        for (double t : scales)
          if (sup(x, t, eta * t) < threshold) {
            fail[i] = t;
            return;
          }
      });

      std::vector<Point> cand;
      std::vector<double> rad;
      std::vector<size_t> cand_pt;
      for (size_t i = 0; i < par.pts.size(); ++i) {
        if (fail[i] / 2 > r) {
          cand.push_back(tree.stratum[par.pts[i]]);
          rad.push_back(fail[i] / 2);
          cand_pt.push_back(par.pts[i]);
        } else {
          ur_points.push_back(par.pts[i]);
        }
      }
      std::vector<size_t> order = detail::lex_order(cand);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rad[a] > rad[b]; });
      const auto chosen = detail::vitali_select(cand, rad, order);
      std::vector<std::vector<size_t>> members(chosen.size());
      for (size_t i = 0; i < cand.size(); ++i)
        for (size_t c = 0; c < chosen.size(); ++c)
          if ((cand[i] - cand[chosen[c]]).norm() <= rad[chosen[c]]) {
            members[c].push_back(cand_pt[i]);
            break;
          }

      for (size_t c = 0; c < chosen.size(); ++c) {
        const Point& xc = cand[chosen[c]];
        const double ri = rad[chosen[c]];
        const double e = sup(xc, ri, ri);
        std::vector<std::pair<Point, double>> balls;
        if (e <= threshold) {
          balls.emplace_back(xc, ri);
        } else {
          // Recover the ball by eta * r_i balls, whose densities are controlled by monotonicity.
          const double rho = eta * ri;
          if (rho <= r) {
            ur_points.insert(ur_points.end(), members[c].begin(), members[c].end());
            continue;
          }
          std::vector<Point> mp;
          for (size_t q : members[c]) mp.push_back(tree.stratum[q]);
          const auto ord = detail::lex_order(mp);
          const auto sel = detail::vitali_select(mp, std::vector<double>(mp.size(), rho), ord);
          for (size_t s : sel) balls.emplace_back(mp[s], rho);
        }
        std::vector<size_t> assigned;
        for (const auto& [bc, br] : balls) {
          Parent child{bc, br, sup(bc, br, br), {}};
          for (size_t q : members[c]) {
            if (std::find(assigned.begin(), assigned.end(), q) != assigned.end()) continue;
            if ((tree.stratum[q] - bc).norm() <= br) {
              child.pts.push_back(q);
              assigned.push_back(q);
            }
          }
          tree.u_plus.push_back({bc, br, tree.rounds, child.energy, threshold});
          info.sum_rk += std::pow(br, k);
          ++info.u_plus;
          next.push_back(std::move(child));
        }
      }
    }
    tree.per_round.push_back(info);
    parents.swap(next);
  }
  tree.terminated = parents.empty();

  // U_r: centres with disjoint r/8-balls, maximal among the points whose mass scale reached r.
  std::sort(ur_points.begin(), ur_points.end());
  ur_points.erase(std::unique(ur_points.begin(), ur_points.end()), ur_points.end());
  std::vector<Point> up;
  for (size_t q : ur_points) up.push_back(tree.stratum[q]);
  for (size_t i : detail::lex_order(up)) {
    bool free = true;
    for (const auto& b : tree.u_r)
      if ((b.center - up[i]).norm() < r / 4) {
        free = false;
        break;
      }
    if (free) tree.u_r.push_back({up[i], r, 0, 0, 0});
  }
  if (!tree.per_round.empty()) tree.per_round.back().u_r = tree.u_r.size();

  // Certificates by direct evaluation on a finer sample of the support.
  for (auto& b : tree.u_plus) {
    b.sup_theta = detail::sampled_sup_density(v, b.center, b.radius, b.radius, rel * b.radius / 2);
    if (b.sup_theta > b.bound + 1e-12) tree.certificates_ok = false;
  }

  auto in_any = [](const Point& x, const std::vector<CoverBall>& balls, int round) {
    for (const auto& b : balls)
      if ((round == 0 || b.round == round) && (x - b.center).norm() <= b.radius) return true;
    return false;
  };
  tree.covers_stratum = true;
  tree.final_cover = tree.terminated;
  for (const auto& x : tree.stratum) {
    const bool in_ur = in_any(x, tree.u_r, 0);
    if (!in_ur && !in_any(x, tree.u_plus, 1)) tree.covers_stratum = false;
    if (!in_ur) tree.final_cover = false;
  }
  return tree;
}

// ---------------------------------------------------------------------------------------------

/// Splits balls into groups such that, within a group, r_j <= r_i and x_j in B_{R r_i}(x_i) force
/// r_j < R^{-2} r_i.
inline std::vector<std::vector<size_t>> decompose_groups(const std::vector<CoverBall>& balls, double big_r) {
  if (!(big_r >= 5)) throw std::invalid_argument("decompose_groups: need R >= 5");
  std::vector<Point> c;
  for (const auto& b : balls) c.push_back(b.center);
  std::vector<size_t> order = detail::lex_order(c);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return balls[a].radius > balls[b].radius; });
  std::vector<std::vector<size_t>> groups;
  const double shrink = 1 / (big_r * big_r);
  for (size_t i : order) {
    bool placed = false;
    for (auto& g : groups) {
      bool ok = true;
      for (size_t j : g) {
        // Ball j was placed earlier, so r_j >= r_i.
        const double d = (balls[i].center - balls[j].center).norm();
        if (d < big_r * balls[j].radius && !(balls[i].radius < shrink * balls[j].radius)) {
          ok = false;
          break;
        }
      }
      if (ok) {
        g.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back({i});
  }
  return groups;
}

/// Exhaustive check of the defining property of decompose_groups.
inline bool groups_separated(const std::vector<CoverBall>& balls, const std::vector<std::vector<size_t>>& groups,
                             double big_r) {
  std::vector<int> seen(balls.size(), 0);
  for (const auto& g : groups) {
    for (size_t a : g) {
      ++seen[a];
      for (size_t b : g) {
        if (a == b || balls[b].radius > balls[a].radius) continue;
        if ((balls[b].center - balls[a].center).norm() < big_r * balls[a].radius &&
            !(balls[b].radius < balls[a].radius / (big_r * big_r)))
          return false;
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

// ---------------------------------------------------------------------------------------------
// Weak-L^p experiments

enum class WeakQuantity { kSecondFundamental, kInverseRegularity };

struct WeakLpTable {
  std::vector<double> r;
  std::vector<double> mass;  // mu{x in B_1 : quantity(x) > 1/r}
  LinearFit fit;             // log mass against log r over the positive entries
};

namespace detail {

// Radius of the sublevel ball {q > 1/r} around the vertex of a cone with |A| = sqrt6/|x|.
inline double cone_sublevel_radius(WeakQuantity q, double r) {
  return q == WeakQuantity::kSecondFundamental ? std::sqrt(6.0) * r : (1 + std::sqrt(6.0)) * r;
}

template <class V>
WeakLpTable cone_weak_table(const V& v, const Point& vertex, WeakQuantity q, const std::vector<double>& radii) {
  WeakLpTable t;
  std::vector<double> lx, ly;
  for (double r : radii) {
    if (!(r > 0)) throw std::invalid_argument("weak_Lp_curve: radii must be positive");
    const double m = v.mass(vertex, std::min(1.0, cone_sublevel_radius(q, r)));
    t.r.push_back(r);
    t.mass.push_back(m);
    if (m > 0) {
      lx.push_back(std::log(r));
      ly.push_back(std::log(m));
    }
  }
  if (lx.size() >= 2) t.fit = fit_line(lx, ly);
  return t;
}

}  // namespace detail

inline WeakLpTable weak_Lp_curve(const SimonsCone& c, WeakQuantity q, const std::vector<double>& radii) {
  return detail::cone_weak_table(c, Point::Zero(8), q, radii);
}

/// How r_I is modelled on a mesh: identically infinite (flat) or that of the Simons cone at the origin.
enum class MeshProxy { kFlat, kSimonsCone };

inline WeakLpTable weak_Lp_curve(const SimplicialVarifold& v, WeakQuantity q, const std::vector<double>& radii,
                                 MeshProxy proxy) {
  if (proxy == MeshProxy::kFlat) {
    for (size_t j = 1; j < v.size(); ++j)
      if (grassmann_distance(LinearSubspace::from_frame(v.tangent(j)), LinearSubspace::from_frame(v.tangent(0))) > 1e-9)
        throw std::invalid_argument("weak_Lp_curve: flat proxy needs a planar varifold");
    WeakLpTable t;
    for (double r : radii) {
      t.r.push_back(r);
      t.mass.push_back(0.0);
    }
    return t;
  }
  if (v.ambient_dim() != 8 || v.dim() != 7) throw std::invalid_argument("weak_Lp_curve: Simons proxy needs a 7-mesh in R^8");
  return detail::cone_weak_table(v, Point::Zero(8), q, radii);
}

}  // namespace qs
