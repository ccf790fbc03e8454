#pragma once

#include "qstrat/geom.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace qs {

/// Malformed external input (maps to CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double default_gate(int k) { return omega(k) * std::pow(40.0, -k); }

namespace detail {

struct CellKey {
  std::array<std::int32_t, 8> c{};
  bool operator==(const CellKey& o) const { return c == o.c; }
};

struct CellKeyHash {
  size_t operator()(const CellKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : k.c) {
      h ^= static_cast<std::uint32_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<size_t>(h);
  }
};

struct UniformGrid {
  double cell = 1.0;
  double reach = 0.0;  // queries must stay within this box
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> buckets;
};

}  // namespace detail

/// Finite atomic measure sum_i w_i delta_{x_i} with ball queries.
class WeightedPointMeasure {
 public:
  explicit WeightedPointMeasure(int n = 0) : n_(n), cache_(std::make_shared<Cache>()) {}

  WeightedPointMeasure(int n, std::vector<double> coords, std::vector<double> weights)
      : n_(n), coords_(std::move(coords)), w_(std::move(weights)), cache_(std::make_shared<Cache>()) {
    if (n_ <= 0) throw DimensionError("WeightedPointMeasure: ambient dimension must be positive");
    if (coords_.size() != w_.size() * static_cast<size_t>(n_))
      throw DimensionError("WeightedPointMeasure: coordinate count does not match weights");
    for (double v : coords_)
      if (!std::isfinite(v)) throw std::invalid_argument("WeightedPointMeasure: non-finite coordinate");
    for (double v : w_)
      if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("WeightedPointMeasure: bad weight");
  }

  static WeightedPointMeasure from_points(const std::vector<Point>& pts, const std::vector<double>& w) {
    if (pts.size() != w.size()) throw DimensionError("from_points: size mismatch");
    if (pts.empty()) return WeightedPointMeasure(0);
    const int n = static_cast<int>(pts[0].size());
    std::vector<double> c;
    c.reserve(pts.size() * static_cast<size_t>(n));
    for (const auto& p : pts) {
      require_same_dim(p.size(), n, "from_points");
      c.insert(c.end(), p.data(), p.data() + n);
    }
    return WeightedPointMeasure(n, std::move(c), w);
  }

  int dim() const { return n_; }
  size_t size() const { return w_.size(); }
  bool empty() const { return w_.empty(); }
  const double* point(size_t i) const { return coords_.data() + i * static_cast<size_t>(n_); }
  Point atom(size_t i) const { return Eigen::Map<const Vec>(point(i), n_); }
  double weight(size_t i) const { return w_[i]; }
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& coords() const { return coords_; }

  double total_mass() const {
    double s = 0;
    for (double v : w_) s += v;
    return s;
  }

  double dist2(size_t i, const double* x) const {
    const double* p = point(i);
    double s = 0;
    for (int d = 0; d < n_; ++d) {
      const double t = p[d] - x[d];
      s += t * t;
    }
    return s;
  }

  /// Calls f(i) for every atom in the closed ball B_r(x).
  template <class F>
  void for_each_in_ball(const double* x, double r, F&& f) const {
    if (w_.empty()) return;
    const double r2 = r * r;
    const detail::UniformGrid* g = n_ <= 8 && w_.size() > 64 ? grid_for(r) : nullptr;
    size_t ncells = 1;
    std::array<std::int32_t, 8> lo{}, hi{};
    if (g) {
      for (int d = 0; d < n_; ++d) {
        if (std::abs(x[d]) + r > g->reach) {
          ncells = w_.size() + 1;
          break;
        }
        lo[d] = static_cast<std::int32_t>(std::floor((x[d] - r) / g->cell));
        hi[d] = static_cast<std::int32_t>(std::floor((x[d] + r) / g->cell));
        ncells *= static_cast<size_t>(hi[d] - lo[d] + 1);
        if (ncells > w_.size()) break;
      }
    }
    if (!g || ncells > w_.size()) {
      for (size_t i = 0; i < w_.size(); ++i)
        if (dist2(i, x) <= r2) f(i);
      return;
    }
    detail::CellKey key;
    key.c = lo;
    while (true) {
      auto it = g->buckets.find(key);
      if (it != g->buckets.end()) {
        for (auto i : it->second)
          if (dist2(i, x) <= r2) f(static_cast<size_t>(i));
      }
      int d = 0;
      for (; d < n_; ++d) {
        if (key.c[d] < hi[d]) {
          ++key.c[d];
          break;
        }
        key.c[d] = lo[d];
      }
      if (d == n_) break;
    }
  }

  template <class F>
  void for_each_in_ball(const Point& x, double r, F&& f) const {
    require_same_dim(x.size(), n_, "ball query");
    for_each_in_ball(x.data(), r, std::forward<F>(f));
  }

  double mass_in_ball(const Point& x, double r) const {
    double m = 0;
    for_each_in_ball(x, r, [&](size_t i) { m += w_[i]; });
    return m;
  }

  /// Reference implementation used to validate the index.
  double mass_in_ball_linear(const Point& x, double r) const {
    double m = 0;
    for (size_t i = 0; i < w_.size(); ++i)
      if (dist2(i, x.data()) <= r * r) m += w_[i];
    return m;
  }

  std::vector<size_t> indices_in_ball(const Point& x, double r) const {
    std::vector<size_t> out;
    for_each_in_ball(x, r, [&](size_t i) { out.push_back(i); });
    std::sort(out.begin(), out.end());
    return out;
  }

  WeightedPointMeasure subset(const std::vector<size_t>& idx) const {
    std::vector<double> c, w;
    for (size_t i : idx) {
      c.insert(c.end(), point(i), point(i) + n_);
      w.push_back(w_[i]);
    }
    return WeightedPointMeasure(n_, std::move(c), std::move(w));
  }

  /// Dilation about center by lambda; weights are multiplied by weight_factor.
  WeightedPointMeasure scaled(double lambda, const Point& center, double weight_factor = 1.0) const {
    std::vector<double> c = coords_;
    std::vector<double> w = w_;
    for (double& v : w) v *= weight_factor;
    for (size_t i = 0; i < w_.size(); ++i)
      for (int d = 0; d < n_; ++d) {
        double& v = c[i * static_cast<size_t>(n_) + static_cast<size_t>(d)];
        v = center[d] + lambda * (v - center[d]);
      }
    return WeightedPointMeasure(n_, std::move(c), std::move(w));
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<int, std::unique_ptr<detail::UniformGrid>> grids;
  };

  const detail::UniformGrid* grid_for(double r) const {
    const int level = static_cast<int>(std::ceil(std::log2(std::max(r, 1e-300))));
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto& slot = cache_->grids[level];
    if (!slot) {
      slot = std::make_unique<detail::UniformGrid>();
      slot->cell = std::ldexp(1.0, level);
      slot->reach = 1e9 * slot->cell;
      double extent = 0;
      for (double v : coords_) extent = std::max(extent, std::abs(v));
      if (extent > slot->reach) slot->reach = -1.0;  // int32 cell keys would overflow; always scan
      for (size_t i = 0; i < w_.size() && slot->reach > 0; ++i) {
        detail::CellKey key;
        const double* p = point(i);
        for (int d = 0; d < n_; ++d) key.c[d] = static_cast<std::int32_t>(std::floor(p[d] / slot->cell));
        slot->buckets[key].push_back(static_cast<std::uint32_t>(i));
      }
    }
    return slot.get();
  }

  int n_ = 0;
  std::vector<double> coords_;
  std::vector<double> w_;
  std::shared_ptr<Cache> cache_;
};

/// Second directional moments of the restriction of mu to a ball, normalized to a probability measure.
struct MomentDecomposition {
  Point center_of_mass;
  Vec eigenvalues;   // descending, >= 0
  Mat eigenvectors;  // columns
  double mass = 0;   // unnormalized mass of the ball
};

namespace detail {

struct RawMoments {
  double mass = 0;
  Vec mean;
  Mat cov;  // normalized, centered
  size_t count = 0;
};

inline RawMoments raw_moments(const WeightedPointMeasure& mu, const double* x, double r) {
  const int n = mu.dim();
  RawMoments out;
  out.mean = Vec::Zero(n);
  out.cov = Mat::Zero(n, n);
  std::vector<size_t> idx;
  mu.for_each_in_ball(x, r, [&](size_t i) {
    if (mu.weight(i) > 0) idx.push_back(i);
  });
  out.count = idx.size();
  for (size_t i : idx) {
    const double w = mu.weight(i);
    out.mass += w;
    out.mean += w * Eigen::Map<const Vec>(mu.point(i), n);
  }
  if (out.mass <= 0) return out;
  out.mean /= out.mass;
  Vec d(n);
  for (size_t i : idx) {
    const double w = mu.weight(i);
    d = Eigen::Map<const Vec>(mu.point(i), n) - out.mean;
    out.cov.noalias() += w * d * d.transpose();
  }
  out.cov /= out.mass;
  return out;
}

}  // namespace detail

inline MomentDecomposition moments(const WeightedPointMeasure& mu, const Point& x, double r) {
  require_same_dim(x.size(), mu.dim(), "moments");
  if (!(r > 0)) throw std::invalid_argument("moments: r must be positive");
  const auto raw = detail::raw_moments(mu, x.data(), r);
  if (raw.mass <= 0) throw std::invalid_argument("moments: zero mass in ball");
  const SymEigen e = sym_eigen(raw.cov);
  MomentDecomposition m;
  m.center_of_mass = raw.mean;
  m.eigenvalues = e.values.cwiseMax(0.0);
  m.eigenvectors = e.vectors;
  m.mass = raw.mass;
  return m;
}

struct BestPlane {
  AffineSubspace plane;
  double residual = 0;  // normalized: sum of trailing eigenvalues
  double mass = 0;
};

inline double trailing_sum(const Vec& ev, int k) {
  double s = 0;
  for (Eigen::Index j = ev.size() - 1; j >= k; --j) s += ev(j);
  return s;
}

inline BestPlane best_plane(const MomentDecomposition& m, int k) {
  if (k < 0 || k > m.eigenvalues.size()) throw std::invalid_argument("best_plane: bad k");
  const Mat frame = m.eigenvectors.leftCols(k);
  return {AffineSubspace(m.center_of_mass, LinearSubspace::from_frame(frame)), trailing_sum(m.eigenvalues, k),
          m.mass};
}

inline BestPlane best_plane(const WeightedPointMeasure& mu, const Point& x, double r, int k) {
  return best_plane(moments(mu, x, r), k);
}

/// k-dimensional displacement with mass gate; zero when mu(B_r(x)) < gate * r^k.
inline double displacement(const WeightedPointMeasure& mu, const double* x, double r, int k, double gate) {
  if (!(r > 0)) throw std::invalid_argument("displacement: r must be positive");
  const auto raw = detail::raw_moments(mu, x, r);
  if (raw.mass < gate * std::pow(r, k) || raw.mass <= 0) return 0.0;
  if (raw.count <= static_cast<size_t>(k) + 1) return 0.0;
  const SymEigen e = sym_eigen(raw.cov);
  const double res = std::max(0.0, trailing_sum(e.values.cwiseMax(0.0), k));
  return raw.mass * res / std::pow(r, k + 2);
}

inline double displacement(const WeightedPointMeasure& mu, const Point& x, double r, int k, double gate) {
  require_same_dim(x.size(), mu.dim(), "displacement");
  return displacement(mu, x.data(), r, k, gate);
}

inline double displacement(const WeightedPointMeasure& mu, const Point& x, double r, int k) {
  return displacement(mu, x, r, k, default_gate(k));
}

namespace detail {

inline bool ball_has_more_than(const WeightedPointMeasure& mu, const double* y, double r, size_t cap) {
  size_t c = 0;
  mu.for_each_in_ball(y, r, [&](size_t i) {
    if (mu.weight(i) > 0) ++c;
  });
  return c > cap;
}

}  // namespace detail

/// r^{-k} sum_{r_b <= r/2} int_{B_r(x)} D(y, r_b) dmu(y), over dyadic r_b = 2^{-b}.
/// Scales where every ball around an atom of B_r(x) holds at most k+1 atoms contribute nothing and
/// end the sum.
inline double dini_sum(const WeightedPointMeasure& mu, const Point& x, double r, int k, double gate) {
  require_same_dim(x.size(), mu.dim(), "dini_sum");
  if (!(r > 0)) throw std::invalid_argument("dini_sum: r must be positive");
  const auto inside = mu.indices_in_ball(x, r);
  if (inside.empty()) return 0.0;
  int beta = static_cast<int>(std::ceil(-std::log2(r / 2.0) - 1e-12));
  double total = 0;
  for (;; ++beta) {
    const double rb = std::ldexp(1.0, -beta);
    bool any = false;
    double level = 0;
    for (size_t i : inside) {
      if (mu.weight(i) <= 0) continue;
      if (!detail::ball_has_more_than(mu, mu.point(i), rb, static_cast<size_t>(k) + 1)) continue;
      any = true;
      level += mu.weight(i) * displacement(mu, mu.point(i), rb, k, gate);
    }
    total += level;
    if (!any || beta > 1060) break;
  }
  return total / std::pow(r, k);
}

inline double dini_sum(const WeightedPointMeasure& mu, const Point& x, double r, int k) {
  return dini_sum(mu, x, r, k, default_gate(k));
}

struct DisplacementProfile {
  Point center;
  int k = 0;
  std::vector<int> alpha;
  std::vector<double> r;
  std::vector<double> values;
  std::vector<bool> gated;  // true when the mass gate passed
};

inline DisplacementProfile displacement_profile(const WeightedPointMeasure& mu, const Point& x, int k,
                                                int alpha_min, int alpha_max, double gate) {
  DisplacementProfile p;
  p.center = x;
  p.k = k;
  for (int a = alpha_min; a <= alpha_max; ++a) {
    const double r = std::ldexp(1.0, -a);
    const bool pass = mu.mass_in_ball(x, r) >= gate * std::pow(r, k) && mu.mass_in_ball(x, r) > 0;
    p.alpha.push_back(a);
    p.r.push_back(r);
    p.gated.push_back(pass);
    p.values.push_back(pass ? displacement(mu, x, r, k, gate) : 0.0);
  }
  return p;
}

inline void write_profile_csv(std::ostream& os, const DisplacementProfile& p) {
  os << "alpha,r,D,gated\n";
  os.precision(17);
  for (size_t i = 0; i < p.r.size(); ++i)
    os << p.alpha[i] << ',' << p.r[i] << ',' << p.values[i] << ',' << (p.gated[i] ? 1 : 0) << '\n';
}

struct PointwiseBound {
  double lhs = 0, rhs = 0;
};

/// D(x,r) against 2^{k+2} times the mu-average over B_r(x) of D(y,2r).
inline PointwiseBound pointwise_D_bound_check(const WeightedPointMeasure& mu, const Point& x, double r, int k,
                                              double gate) {
  const double m = mu.mass_in_ball(x, r);
  if (m < gate * std::pow(r, k) || m <= 0) throw std::invalid_argument("pointwise_D_bound_check: gate failure");
  PointwiseBound b;
  b.lhs = displacement(mu, x, r, k, gate);
  double avg = 0;
  mu.for_each_in_ball(x, r, [&](size_t i) { avg += mu.weight(i) * displacement(mu, mu.point(i), 2 * r, k, gate); });
  b.rhs = std::pow(2.0, k + 2) * avg / m;
  return b;
}

// ---------------------------------------------------------------------------------------------
// Point-cloud files

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument("x");
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": cannot parse number '" + s + "'");
  }
}

}  // namespace detail

/// CSV with header x1,...,xn,weight.
inline WeightedPointMeasure read_measure_csv(std::istream& in, const std::string& name = "input") {
  std::string line;
  size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    header = detail::split_csv(line);
    break;
  }
  if (header.size() < 2 || header.back() != "weight")
    throw InputError(name + ":" + std::to_string(lineno) + ": expected header x1,...,xn,weight");
  const int n = static_cast<int>(header.size()) - 1;
  for (int d = 0; d < n; ++d)
    if (header[static_cast<size_t>(d)] != "x" + std::to_string(d + 1))
      throw InputError(name + ":" + std::to_string(lineno) + ": bad header column '" +
                       header[static_cast<size_t>(d)] + "'");
  std::vector<double> c, w;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto f = detail::split_csv(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != header.size())
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()));
    for (int d = 0; d < n; ++d) c.push_back(detail::parse_double(f[static_cast<size_t>(d)], where));
    const double wt = detail::parse_double(f.back(), where);
    if (wt < 0) throw InputError(where + ": negative weight");
    w.push_back(wt);
  }
  return WeightedPointMeasure(n, std::move(c), std::move(w));
}

inline void write_measure_csv(std::ostream& os, const WeightedPointMeasure& mu) {
  for (int d = 0; d < mu.dim(); ++d) os << 'x' << d + 1 << ',';
  os << "weight\n";
  os.precision(17);
  for (size_t i = 0; i < mu.size(); ++i) {
    for (int d = 0; d < mu.dim(); ++d) os << mu.point(i)[d] << ',';
    os << mu.weight(i) << '\n';
  }
}

}  // namespace qs
