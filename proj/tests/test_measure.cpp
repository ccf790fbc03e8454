#include <catch_amalgamated.hpp>

#include "qstrat/measure.hpp"
#include "oracles.hpp"

#include <random>
#include <sstream>

using namespace qs;
using Catch::Approx;

namespace {

Point P(std::initializer_list<double> c) {
  Point p(static_cast<Eigen::Index>(c.size()));
  Eigen::Index i = 0;
  for (double v : c) p(i++) = v;
  return p;
}

WeightedPointMeasure uniform_ball_cloud(int n, size_t count, std::mt19937_64& rng, double radius = 1.0) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point> pts;
  std::vector<double> w;
  while (pts.size() < count) {
    const Vec d = oracle::random_unit(n, rng);
    pts.push_back(radius * std::pow(u(rng), 1.0 / n) * d);
    w.push_back(1.0);
  }
  return WeightedPointMeasure::from_points(pts, w);
}

WeightedPointMeasure cross(double h) {
  return WeightedPointMeasure::from_points({P({1, 0}), P({-1, 0}), P({0, h}), P({0, -h})}, {1, 1, 1, 1});
}

// Unnormalized integral of squared distance to the line through c with direction angle t.
double line_energy(const WeightedPointMeasure& mu, const Point& c, double t) {
  const Vec d = P({std::cos(t), std::sin(t)});
  double e = 0;
  for (size_t i = 0; i < mu.size(); ++i) {
    const Vec y = mu.atom(i) - c;
    e += mu.weight(i) * (y - y.dot(d) * d).squaredNorm();
  }
  return e;
}

// Normalized integral of squared distance to the plane through c with unit normal nv.
double plane_energy(const WeightedPointMeasure& mu, const Vec& nv) {
  double m = 0;
  Vec mean = Vec::Zero(3);
  for (size_t i = 0; i < mu.size(); ++i) {
    m += mu.weight(i);
    mean += mu.weight(i) * mu.atom(i);
  }
  mean /= m;
  double e = 0;
  for (size_t i = 0; i < mu.size(); ++i) {
    const double t = (mu.atom(i) - mean).dot(nv);
    e += mu.weight(i) * t * t;
  }
  return e / m;
}

}  // namespace

TEST_CASE("mass in ball") {
  const auto one = WeightedPointMeasure::from_points({P({0.5, 0.5})}, {2.0});
  CHECK(one.mass_in_ball(P({0.5, 0.5}), 1.0) == 2.0);
  const WeightedPointMeasure empty(2);
  CHECK(empty.mass_in_ball(P({0, 0}), 1.0) == 0.0);

  std::mt19937_64 rng(1);
  const auto mu = uniform_ball_cloud(3, 1000, rng);
  CHECK(mu.mass_in_ball(Point::Zero(3), 0.5) == mu.mass_in_ball_linear(Point::Zero(3), 0.5));
}

TEST_CASE("ball index agrees with linear scan") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int n : {1, 2, 3, 5, 8, 10}) {
    const auto mu = uniform_ball_cloud(n, 700, rng);
    for (int q = 0; q < 200; ++q) {
      Point x(n);
      for (int d = 0; d < n; ++d) x(d) = u(rng);
      const double r = std::ldexp(1.0, -(q % 9)) * (0.5 + 0.5 * std::abs(u(rng)));
      std::vector<size_t> lin;
      for (size_t i = 0; i < mu.size(); ++i)
        if ((mu.atom(i) - x).squaredNorm() <= r * r) lin.push_back(i);
      REQUIRE(mu.indices_in_ball(x, r) == lin);
    }
  }
  // Query on an atom at exactly its distance: closed ball.
  const auto two = WeightedPointMeasure::from_points({P({0, 0}), P({0.75, 0})}, {1, 1});
  CHECK(two.mass_in_ball(P({0, 0}), 0.75) == 2.0);
}

TEST_CASE("ball index survives extreme scales") {
  std::vector<Point> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(P({1e6 + i * 1e-10, 0}));
  const auto mu = WeightedPointMeasure::from_points(pts, std::vector<double>(100, 1.0));
  CHECK(mu.mass_in_ball(P({1e6, 0}), 1e-9 + 1e-12) == mu.mass_in_ball_linear(P({1e6, 0}), 1e-9 + 1e-12));
  CHECK(mu.mass_in_ball(P({1e6, 0}), 1e-20) == 1.0);
}

TEST_CASE("moments examples") {
  const auto pm = WeightedPointMeasure::from_points({P({1, 0, 0}), P({-1, 0, 0})}, {1, 1});
  const auto m = moments(pm, Point::Zero(3), 2.0);
  CHECK(m.center_of_mass.norm() == 0.0);
  CHECK(m.eigenvalues(0) == Approx(1.0));
  CHECK(std::abs(m.eigenvectors(0, 0)) == Approx(1.0));
  CHECK(m.eigenvalues(1) == 0.0);
  CHECK(m.eigenvalues(2) == 0.0);

  const auto sq = WeightedPointMeasure::from_points({P({1, 1}), P({1, -1}), P({-1, 1}), P({-1, -1})}, {1, 1, 1, 1});
  const auto ms = moments(sq, Point::Zero(2), 2.0);
  CHECK(ms.eigenvalues(0) == Approx(1.0));
  CHECK(ms.eigenvalues(1) == Approx(1.0));
  CHECK((ms.eigenvectors.transpose() * ms.eigenvectors - Mat::Identity(2, 2)).norm() < 1e-12);
  CHECK(best_plane(sq, Point::Zero(2), 2.0, 1).residual == Approx(1.0));

  CHECK_THROWS(moments(sq, P({10, 10}), 1.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  std::vector<Point> planar;
  for (int i = 0; i < 30; ++i) planar.push_back(P({g(rng), g(rng), 0.0, 0.0}));
  const auto mp = moments(WeightedPointMeasure::from_points(planar, std::vector<double>(30, 1.0)), Point::Zero(4), 100);
  CHECK(mp.eigenvalues(2) < 1e-14);
  CHECK(mp.eigenvalues(3) < 1e-14);

  std::vector<Point> line;
  for (int i = 0; i < 7; ++i) line.push_back(P({0.1 * i, 0.2 * i, -0.05 * i}));
  CHECK(best_plane(WeightedPointMeasure::from_points(line, std::vector<double>(7, 1.0)), Point::Zero(3), 10, 1)
            .residual < 1e-14);
}

TEST_CASE("best plane residual matches a brute-force plane net") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Point> pts;
  std::vector<double> w;
  for (int i = 0; i < 20; ++i) {
    pts.push_back(P({u(rng), u(rng), 0.3 * u(rng)}));
    w.push_back(0.5 + 0.5 * std::abs(u(rng)));
  }
  const auto mu = WeightedPointMeasure::from_points(pts, w);
  const double residual = best_plane(mu, Point::Zero(3), 10.0, 2).residual;

  // Coarse net of normals over the upper hemisphere, then two local refinements.
  double best = 1e300, bt = 0, bp = 0;
  auto scan = [&](double t0, double t1, double p0, double p1, int steps) {
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        const double t = t0 + (t1 - t0) * i / steps, p = p0 + (p1 - p0) * j / steps;
        const double e = plane_energy(mu, P({std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)}));
        if (e < best) {
          best = e;
          bt = t;
          bp = p;
        }
      }
  };
  scan(0, kPi / 2, 0, 2 * kPi, 200);
  for (double span : {0.05, 0.002}) scan(bt - span, bt + span, bp - span, bp + span, 100);
  CHECK(std::abs(best - residual) < 1e-4);
  CHECK(residual <= best + 1e-12);
}

TEST_CASE("moment invariants on random clouds") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uw(0.1, 2.0);
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + t % 5;
    auto base = uniform_ball_cloud(n, 40, rng);
    std::vector<double> w(base.size());
    for (auto& v : w) v = uw(rng);
    const WeightedPointMeasure mu(n, base.coords(), w);
    const Point x = Point::Zero(n);
    const auto m = moments(mu, x, 0.8);
    for (Eigen::Index j = 1; j < m.eigenvalues.size(); ++j) CHECK(m.eigenvalues(j) <= m.eigenvalues(j - 1));
    const auto idx = mu.indices_in_ball(x, 0.8);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vec v = m.eigenvectors.col(k);
      Vec el = Vec::Zero(n);
      for (size_t i : idx) {
        const Vec d = mu.atom(i) - m.center_of_mass;
        el += mu.weight(i) * d.dot(v) * d;
      }
      el /= m.mass;
      CHECK((el - m.eigenvalues(k) * v).norm() <= 1e-8 * m.eigenvalues(0));
    }
    for (int k = 0; k <= n; ++k)
      CHECK(std::abs(best_plane(m, k).residual - trailing_sum(m.eigenvalues, k)) <= 1e-10);
  }
}

TEST_CASE("displacement examples") {
  const auto c = cross(0.1);
  CHECK(displacement(c, Point::Zero(2), 2.0, 1) == Approx(0.0025).epsilon(1e-12));

  // Oracle: brute force over lines through the center of mass.
  double best = 1e300;
  for (int i = 0; i < 200000; ++i) best = std::min(best, line_energy(c, Point::Zero(2), kPi * i / 200000));
  CHECK(best / 8.0 == Approx(0.0025).epsilon(1e-9));

  std::vector<Point> planar;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 50; ++i) planar.push_back(P({g(rng), g(rng), 0.0}));
  const auto pm = WeightedPointMeasure::from_points(planar, std::vector<double>(50, 1.0));
  for (int q = 0; q < 20; ++q) CHECK(displacement(pm, P({g(rng), g(rng), g(rng)}), 1.5, 2) < 1e-14);

  // Gate: 4 unit atoms against a gate of 10 r^k.
  CHECK(displacement(c, Point::Zero(2), 2.0, 1, 10.0) == 0.0);
  CHECK(displacement(c, Point::Zero(2), 2.0, 1, 1.99) > 0.0);
}

TEST_CASE("displacement is scale invariant") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int t = 0; t < 40; ++t) {
    const int n = 2 + t % 3;
    const int k = 1 + t % (n - 1);
    const auto mu = uniform_ball_cloud(n, 60, rng);
    const double lam = u(rng);
    const Point c = oracle::random_unit(n, rng);
    const Point x = 0.3 * oracle::random_unit(n, rng);
    const auto s = mu.scaled(lam, c, std::pow(lam, k));
    const double d0 = displacement(mu, x, 0.7, k);
    const double d1 = displacement(s, c + lam * (x - c), 0.7 * lam, k);
    CHECK(std::abs(d0 - d1) <= 1e-10 * std::max(1.0, d0));
  }
}

TEST_CASE("displacement is monotone in the measure") {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution keep(0.6);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + t % 3;
    const int k = 1 + t % (n - 1);
    const auto mu = uniform_ball_cloud(n, 30, rng);
    std::vector<size_t> idx;
    for (size_t i = 0; i < mu.size(); ++i)
      if (keep(rng)) idx.push_back(i);
    const auto sub = mu.subset(idx);
    const Point x = 0.5 * oracle::random_unit(n, rng);
    const double r = 0.4 + 0.1 * (t % 7);
    CHECK(displacement(sub, x, r, k) <= displacement(mu, x, r, k) + 1e-12);
  }
}

TEST_CASE("pointwise D bound") {
  std::vector<Point> planar;
  for (int i = 0; i < 10; ++i) planar.push_back(P({0.1 * i, 0.0}));
  const auto pm = WeightedPointMeasure::from_points(planar, std::vector<double>(10, 1.0));
  const auto b0 = pointwise_D_bound_check(pm, P({0.5, 0}), 0.5, 1, default_gate(1));
  CHECK(b0.lhs == 0.0);
  CHECK(b0.rhs == 0.0);

  // Square corner: the two legs of an L.
  std::vector<Point> corner;
  for (int i = 0; i <= 10; ++i) {
    corner.push_back(P({0.1 * i, 0.0}));
    if (i > 0) corner.push_back(P({0.0, 0.1 * i}));
  }
  const auto cm = WeightedPointMeasure::from_points(corner, std::vector<double>(corner.size(), 0.1));
  const auto bc = pointwise_D_bound_check(cm, Point::Zero(2), 1.0, 1, default_gate(1));
  // Every ball B_2(y) holds the whole corner, so the bound is attained with equality.
  CHECK(bc.lhs == Approx(0.09690476190476191).epsilon(1e-9));
  CHECK(bc.rhs == Approx(0.09690476190476191).epsilon(1e-9));
  CHECK(bc.lhs <= bc.rhs * (1 + 1e-12));

  CHECK_THROWS(pointwise_D_bound_check(cm, P({5, 5}), 1.0, 1, default_gate(1)));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ur(0.2, 1.0);
  int checked = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + t % 2;
    const int k = 1 + t % (n - 1);
    const auto mu = uniform_ball_cloud(n, 40, rng);
    const Point x = mu.atom(static_cast<size_t>(t) % mu.size());
    const double r = ur(rng);
    if (mu.mass_in_ball(x, r) < default_gate(k) * std::pow(r, k)) continue;
    const auto b = pointwise_D_bound_check(mu, x, r, k, default_gate(k));
    CHECK(b.lhs <= b.rhs * (1 + 1e-12));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("dini sum trivial cases") {
  std::vector<Point> planar;
  for (int i = 0; i < 64; ++i) planar.push_back(P({i / 64.0, 0.0}));
  const auto pm = WeightedPointMeasure::from_points(planar, std::vector<double>(64, 1.0 / 64));
  CHECK(dini_sum(pm, Point::Zero(2), 1.0, 1) < 1e-14);
  const auto single = WeightedPointMeasure::from_points({P({0.2, 0.1})}, {1.0});
  CHECK(dini_sum(single, Point::Zero(2), 1.0, 1) == 0.0);
  // Only the scale 2 sees more than two atoms; each of the four balls holds the whole cross.
  CHECK(dini_sum(cross(0.1), Point::Zero(2), 2.0, 1) == 0.0);
  CHECK(dini_sum(cross(0.1), Point::Zero(2), 4.0, 1) == Approx(4 * 0.0025 / 4.0).epsilon(1e-12));
}

TEST_CASE("displacement profile") {
  const auto c = cross(0.1);
  const auto p = displacement_profile(c, Point::Zero(2), 1, -1, 2, default_gate(1));
  REQUIRE(p.values.size() == 4);
  CHECK(p.values[0] == Approx(0.0025));
  CHECK(p.gated[0]);
  for (size_t i = 0; i < p.values.size(); ++i)
    if (!p.gated[i]) CHECK(p.values[i] == 0.0);
  std::ostringstream os;
  write_profile_csv(os, p);
  CHECK(os.str().rfind("alpha,r,D,gated\n-1,2,0.0025", 0) == 0);
}

TEST_CASE("csv round trip and errors") {
  std::mt19937_64 rng(10);
  const auto mu = uniform_ball_cloud(3, 25, rng);
  std::stringstream ss;
  write_measure_csv(ss, mu);
  const auto back = read_measure_csv(ss);
  REQUIRE(back.size() == mu.size());
  CHECK(back.coords() == mu.coords());

  std::istringstream bad_header("a,b,weight\n1,2,3\n");
  CHECK_THROWS_AS(read_measure_csv(bad_header), InputError);
  std::istringstream bad_value("x1,x2,weight\n1,zz,3\n");
  try {
    read_measure_csv(bad_value, "cloud.csv");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("cloud.csv:2") != std::string::npos);
  }
  std::istringstream neg("x1,weight\n1,-1\n");
  CHECK_THROWS_AS(read_measure_csv(neg), InputError);
}
