#pragma once

#include "qstrat/linalg.hpp"

#include <limits>
#include <vector>

namespace qs {

using Point = Vec;

inline void require_finite(const Point& x, const char* what) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
}

/// k-dimensional linear subspace of R^n stored by an orthonormal frame (n x k).
class LinearSubspace {
 public:
  explicit LinearSubspace(int n = 0) : frame_(Mat::Zero(n, 0)) {}

  /// Accepts an already orthonormal frame; rejects it if the Gram check fails at 1e-12.
  static LinearSubspace from_frame(const Mat& frame) {
    LinearSubspace s;
    s.frame_ = frame;
    const Mat g = frame.transpose() * frame;
    if (frame.cols() > 0 &&
        (g - Mat::Identity(frame.cols(), frame.cols())).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("LinearSubspace: frame is not orthonormal");
    }
    return s;
  }

  /// Span of the columns, orthonormalized by modified Gram-Schmidt with one re-orthogonalization
  /// pass. Columns whose residual falls below tol (relative) are dropped.
  static LinearSubspace span(const Mat& vectors, double tol = 1e-10) {
    const Eigen::Index n = vectors.rows();
    Mat q(n, vectors.cols());
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
      Vec v = vectors.col(j);
      const double norm0 = v.norm();
      if (norm0 == 0.0) continue;
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < k; ++i) v -= q.col(i).dot(v) * q.col(i);
      }
      const double nv = v.norm();
      if (nv <= tol * norm0) continue;
      q.col(k++) = v / nv;
    }
    return from_frame(q.leftCols(k));
  }

  static LinearSubspace coordinate(int n, const std::vector<int>& axes) {
    Mat f = Mat::Zero(n, static_cast<Eigen::Index>(axes.size()));
    for (size_t j = 0; j < axes.size(); ++j) f(axes[j], static_cast<Eigen::Index>(j)) = 1.0;
    return from_frame(f);
  }

  int ambient_dim() const { return static_cast<int>(frame_.rows()); }
  int dim() const { return static_cast<int>(frame_.cols()); }
  const Mat& frame() const { return frame_; }

  Mat projector() const { return frame_ * frame_.transpose(); }
  Vec project(const Vec& x) const {
    require_same_dim(x.size(), frame_.rows(), "LinearSubspace::project");
    return frame_ * (frame_.transpose() * x);
  }
  Vec project_perp(const Vec& x) const { return x - project(x); }

  LinearSubspace complement() const {
    const Eigen::Index n = frame_.rows();
    if (frame_.cols() == 0) return from_frame(Mat::Identity(n, n));
    Eigen::JacobiSVD<Mat> svd(frame_, Eigen::ComputeFullU);
    return span(svd.matrixU().rightCols(n - frame_.cols()));
  }

 private:
  Mat frame_;
};

/// base + direction. The base is normalized to the point of the subspace closest to the origin.
class AffineSubspace {
 public:
  AffineSubspace() = default;
  AffineSubspace(const Point& base, LinearSubspace dir) : dir_(std::move(dir)) {
    require_same_dim(base.size(), dir_.ambient_dim(), "AffineSubspace");
    require_finite(base, "AffineSubspace");
    base_ = base - dir_.project(base);
  }

  const Point& base() const { return base_; }
  const LinearSubspace& direction() const { return dir_; }
  int dim() const { return dir_.dim(); }
  int ambient_dim() const { return dir_.ambient_dim(); }

  Point project(const Point& x) const {
    require_same_dim(x.size(), base_.size(), "project");
    return base_ + dir_.project(x - base_);
  }
  double distance(const Point& x) const { return (x - project(x)).norm(); }

 private:
  Point base_;
  LinearSubspace dir_;
};

inline Point project(const AffineSubspace& v, const Point& x) { return v.project(x); }

/// Cosines of the principal angles (descending).
inline Vec principal_cosines(const LinearSubspace& v, const LinearSubspace& w) {
  require_same_dim(v.ambient_dim(), w.ambient_dim(), "principal_cosines");
  const Mat g = v.frame().transpose() * w.frame();
  if (g.size() == 0) return Vec(0);
  Eigen::JacobiSVD<Mat> svd(g);
  return svd.singularValues();
}

/// Sine of the largest principal angle; 1 for unequal dimensions, 0 for two 0-dim subspaces.
inline double grassmann_distance(const LinearSubspace& v, const LinearSubspace& w) {
  require_same_dim(v.ambient_dim(), w.ambient_dim(), "grassmann_distance");
  if (v.dim() != w.dim()) return 1.0;
  if (v.dim() == 0) return 0.0;
  const Vec c = principal_cosines(v, w);
  const double cmin = std::min(1.0, c.minCoeff());
  // Recover small angles accurately from the projector difference instead of 1 - c^2.
  const double s_from_cos = std::sqrt(std::max(0.0, 1.0 - cmin * cmin));
  if (s_from_cos > 1e-4) return std::min(1.0, s_from_cos);
  const Mat d = v.frame() - w.frame() * (w.frame().transpose() * v.frame());
  Eigen::JacobiSVD<Mat> svd(d);
  return std::min(1.0, svd.singularValues().maxCoeff());
}

/// Operator norm of the difference of orthogonal projectors.
inline double projector_gap(const LinearSubspace& v, const LinearSubspace& w) {
  require_same_dim(v.ambient_dim(), w.ambient_dim(), "projector_gap");
  const Mat d = v.projector() - w.projector();
  const SymEigen e = sym_eigen(d);
  return std::max(std::abs(e.values(0)), std::abs(e.values(e.values.size() - 1)));
}

inline double directed_hausdorff(const std::vector<Point>& a, const std::vector<Point>& b) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

inline double hausdorff_distance(const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff_distance: empty set");
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

/// Distance from x to the linear span of the given vectors.
inline double distance_to_span(const Point& x, const std::vector<Point>& vectors) {
  if (vectors.empty()) return x.norm();
  Mat m(x.size(), static_cast<Eigen::Index>(vectors.size()));
  for (size_t j = 0; j < vectors.size(); ++j) {
    require_same_dim(vectors[j].size(), x.size(), "distance_to_span");
    m.col(static_cast<Eigen::Index>(j)) = vectors[j];
  }
  return LinearSubspace::span(m, 1e-13).project_perp(x).norm();
}

inline bool effectively_spans(const std::vector<Point>& p, double alpha) {
  if (p.empty()) throw std::invalid_argument("effectively_spans: no points");
  std::vector<Point> dirs;
  for (size_t i = 1; i < p.size(); ++i) {
    require_same_dim(p[i].size(), p[0].size(), "effectively_spans");
    const Point d = p[i] - p[0];
    if (d.norm() > 1.0 / alpha) return false;
    if (distance_to_span(d, dirs) <= alpha) return false;
    dirs.push_back(d);
  }
  return true;
}

inline bool tau_independent(const std::vector<Point>& x, double tau) {
  if (x.empty()) throw std::invalid_argument("tau_independent: no points");
  std::vector<Point> prev;
  for (const auto& p : x) {
    require_same_dim(p.size(), x[0].size(), "tau_independent");
    if (distance_to_span(p, prev) <= tau) return false;
    prev.push_back(p);
  }
  return true;
}

/// Orthonormal basis of R^n whose first columns span v.
inline Mat completed_basis(const LinearSubspace& v) {
  const int n = v.ambient_dim();
  Mat out(n, n);
  out.leftCols(v.dim()) = v.frame();
  out.rightCols(n - v.dim()) = v.complement().frame();
  return out;
}

}  // namespace qs
