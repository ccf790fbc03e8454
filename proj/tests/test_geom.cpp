#include <catch_amalgamated.hpp>

#include "qstrat/geom.hpp"
#include "oracles.hpp"

#include <random>

using namespace qs;
using Catch::Approx;

TEST_CASE("project onto affine subspaces") {
  const AffineSubspace xaxis(Point::Zero(2), LinearSubspace::coordinate(2, {0}));
  Point x(2);
  x << 3, 4;
  CHECK((project(xaxis, x) - Point((Vec(2) << 3, 0).finished())).norm() < 1e-15);

  Point on(2);
  on << -2, 0;
  CHECK((project(xaxis, on) - on).norm() == 0.0);

  Mat d(2, 1);
  d << 1, 1;
  const AffineSubspace diag(Point::Zero(2), LinearSubspace::span(d));
  x << 1, 0;
  const Point p = project(diag, x);
  CHECK(p(0) == Approx(0.5).margin(1e-15));
  CHECK(p(1) == Approx(0.5).margin(1e-15));
  CHECK(std::abs((x - p).dot(diag.direction().frame().col(0))) < 1e-12);

  CHECK_THROWS_AS(project(diag, Point::Zero(3)), DimensionError);
}

TEST_CASE("orthonormal frames are validated") {
  Mat bad(3, 2);
  bad << 1, 1, 0, 0, 0, 0;
  CHECK_THROWS(LinearSubspace::from_frame(bad));
  const auto s = LinearSubspace::span(bad);
  CHECK(s.dim() == 1);
  Mat near(3, 2);
  near << 1, 1, 0, 1e-9, 0, 0;
  const auto t = LinearSubspace::span(near);
  REQUIRE(t.dim() == 2);
  CHECK((t.frame().transpose() * t.frame() - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("grassmann distance examples") {
  const auto e1 = LinearSubspace::coordinate(2, {0});
  const auto e2 = LinearSubspace::coordinate(2, {1});
  CHECK(grassmann_distance(e1, e1) == 0.0);
  CHECK(grassmann_distance(e1, e2) == Approx(1.0).margin(1e-15));
  Mat l(2, 1);
  l << std::cos(kPi / 6), std::sin(kPi / 6);
  const auto l30 = LinearSubspace::span(l);
  CHECK(grassmann_distance(e1, l30) == Approx(0.5).margin(1e-14));
  CHECK(grassmann_distance(e1, LinearSubspace::coordinate(2, {0, 1})) == 1.0);
  CHECK(grassmann_distance(LinearSubspace(3), LinearSubspace(3)) == 0.0);

  // Sampled-Hausdorff oracle of unit discs.
  const auto sa = oracle::sample_unit_ball_slice(e1, 100);
  const auto sb = oracle::sample_unit_ball_slice(l30, 100);
  CHECK(hausdorff_distance(sa, sb) == Approx(0.5).margin(0.02));
}

TEST_CASE("projector gap examples") {
  const auto e1 = LinearSubspace::coordinate(2, {0});
  const auto e2 = LinearSubspace::coordinate(2, {1});
  CHECK(projector_gap(e1, e1) == Approx(0.0).margin(1e-15));
  CHECK(projector_gap(e1, e2) == Approx(1.0).margin(1e-14));

  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto v = oracle::random_subspace(4, 2, rng);
    const auto w = oracle::random_subspace(4, 2, rng);
    const double dg = grassmann_distance(v, w);
    const double gap = projector_gap(v, w);
    CHECK(gap >= dg - 1e-10);
    CHECK(gap <= 2 * dg + 1e-10);
    // Dense sphere sampling as an independent lower bound on the operator norm.
    CHECK(oracle::sampled_operator_norm(v.projector() - w.projector(), 20000, rng) <= gap + 1e-12);
  }
}

TEST_CASE("grassmann distance is a metric with complement duality") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const int n = 4 + t % 4;
    const int k = 1 + t % (n - 1);
    const auto u = oracle::random_subspace(n, k, rng);
    const auto v = oracle::random_subspace(n, k, rng);
    const auto w = oracle::random_subspace(n, k, rng);
    const double uv = grassmann_distance(u, v), vw = grassmann_distance(v, w), uw = grassmann_distance(u, w);
    CHECK(std::abs(uv - grassmann_distance(v, u)) <= 1e-10);
    CHECK(uw <= uv + vw + 1e-10);
    CHECK(uv >= 0.0);
    CHECK(uv <= 1.0);
    CHECK(std::abs(uv - grassmann_distance(u.complement(), v.complement())) <= 1e-10);
  }
}

TEST_CASE("hausdorff distance") {
  std::vector<Point> a{Point::Zero(1)};
  std::vector<Point> b{Point::Zero(1), Point::Constant(1, 3.0)};
  CHECK(hausdorff_distance(a, a) == 0.0);
  CHECK(hausdorff_distance(a, b) == 3.0);
  CHECK_THROWS(hausdorff_distance(a, {}));
}

TEST_CASE("effective spanning and independence") {
  auto P = [](std::initializer_list<double> c) {
    Point p(static_cast<Eigen::Index>(c.size()));
    Eigen::Index i = 0;
    for (double v : c) p(i++) = v;
    return p;
  };
  CHECK(effectively_spans({P({0, 0}), P({1, 0}), P({0, 1})}, 0.5));
  CHECK_FALSE(effectively_spans({P({0, 0}), P({1, 0}), P({2, 0})}, 1e-6));
  CHECK_FALSE(effectively_spans({P({0, 0}), P({1, 0}), P({1, 0.1})}, 0.2));
  CHECK(effectively_spans({P({0, 0}), P({1, 0}), P({1, 0.1})}, 0.05));
  CHECK_FALSE(effectively_spans({P({0, 0}), P({10, 0})}, 0.5));  // beyond 1/alpha

  CHECK(tau_independent({P({1, 0}), P({0, 1})}, 0.5));
  CHECK_FALSE(tau_independent({P({1, 0}), P({1.1, 0})}, 0.01));
  CHECK(tau_independent({P({1, 0}), P({1, 0.3})}, 0.2));
  CHECK_FALSE(tau_independent({P({1, 0}), P({1, 0.3})}, 0.3));
}

TEST_CASE("nearby affine subspaces have close unit-ball slices") {
  // Measured constant: d_H(V cap B1, W cap B1) <= c * delta whenever V meets B_{1/2} and
  // V cap B1 lies in the delta-neighbourhood of W cap B1.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 1);
  double worst_ratio = 0;
  int used = 0;
  for (int t = 0; t < 400; ++t) {
    const int n = 3 + t % 3;
    const int k = 1 + t % (n - 1);
    const auto v_dir = oracle::random_subspace(n, k, rng);
    Point base(n);
    for (int d = 0; d < n; ++d) base(d) = 0.3 * g(rng);
    const AffineSubspace v(base, v_dir);
    if (v.base().norm() >= 0.5) continue;
    const double eps = std::pow(10.0, -1.0 - (t % 5) / 2.0);
    const Mat f = v_dir.frame() + eps * Mat::NullaryExpr(n, k, [&]() { return g(rng); });
    Point off = v.base();
    for (int d = 0; d < n; ++d) off(d) += eps * g(rng);
    const AffineSubspace w(off, LinearSubspace::span(f));
    if (w.base().norm() >= 1.0) continue;
    double delta = 0, back = 0;
    for (const auto& p : oracle::sample_affine_ball_boundary(v, 400, rng))
      delta = std::max(delta, oracle::distance_to_affine_ball_slice(w, p));
    for (const auto& p : oracle::sample_affine_ball_boundary(w, 400, rng))
      back = std::max(back, oracle::distance_to_affine_ball_slice(v, p));
    if (delta <= 0) continue;
    worst_ratio = std::max(worst_ratio, std::max(delta, back) / delta);
    ++used;
  }
  REQUIRE(used > 200);
  INFO("measured c = " << worst_ratio);
  CHECK(worst_ratio < 4.0);
}
