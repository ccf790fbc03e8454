#include <catch_amalgamated.hpp>

#include "qstrat/simons.hpp"
#include "qstrat/varifold.hpp"
#include "oracles.hpp"

#include <random>
#include <sstream>

using namespace qs;
using Catch::Approx;

namespace {

Point P3(double a, double b, double c) {
  Point p(3);
  p << a, b, c;
  return p;
}

Point P2(double a, double b) {
  Point p(2);
  p << a, b;
  return p;
}

// Relative error of the monotonicity identity.
template <class V>
double identity_error(const V& v, const Point& x, double s, double r) {
  const double drop = mass_drop(v, x, s, r);
  return std::abs(drop - monotonicity_defect(v, x, s, r)) / std::abs(drop);
}

template <class V>
void check_identity_converges(const V& v0, const Point& x, double s, double r) {
  const double e1 = identity_error(v0.with_quadrature_h(0.01), x, s, r);
  const double e2 = identity_error(v0.with_quadrature_h(0.005), x, s, r);
  INFO("err(0.01) = " << e1 << ", err(0.005) = " << e2);
  CHECK(e1 <= 0.02);
  CHECK((e2 <= e1 / 2 || e2 <= 1e-9));
}

}  // namespace

TEST_CASE("simplex quadrature rule is exact on monomials") {
  for (int d = 1; d <= 6; ++d) {
    const auto rule = detail::grundmann_moller(d, 2);
    // Average of l0^a l1^b over the simplex is d! a! b! / (d + a + b)!.
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; a + b <= 5; ++b) {
        double q = 0;
        for (Eigen::Index k = 0; k < rule.weight.size(); ++k)
          q += rule.weight(k) * std::pow(rule.bary(0, k), a) * std::pow(rule.bary(1, k), b);
        const double exact = std::tgamma(d + 1.0) * std::tgamma(a + 1.0) * std::tgamma(b + 1.0) / std::tgamma(d + a + b + 1.0);
        CHECK(q == Approx(exact).epsilon(1e-11));
      }
  }
}

TEST_CASE("triangle and disk overlap matches a grid count") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    std::array<Eigen::Vector2d, 3> tri{Eigen::Vector2d(u(rng), u(rng)), Eigen::Vector2d(u(rng), u(rng)),
                                       Eigen::Vector2d(u(rng), u(rng))};
    const Eigen::Vector2d c(0.5 * u(rng), 0.5 * u(rng));
    const double rho = 0.2 + 0.5 * std::abs(u(rng));
    const int g = 800;
    int hits = 0;
    auto side = [&](int i, const Eigen::Vector2d& p) {
      const auto& a = tri[static_cast<size_t>(i)];
      const auto& b = tri[static_cast<size_t>((i + 1) % 3)];
      return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    };
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) {
        const Eigen::Vector2d p(-1 + 2 * (i + 0.5) / g, -1 + 2 * (j + 0.5) / g);
        if ((p - c).norm() > rho) continue;
        const double s0 = side(0, p), s1 = side(1, p), s2 = side(2, p);
        if ((s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0)) ++hits;
      }
    CHECK(detail::disk_triangle_area(tri, c, rho) == Approx(4.0 * hits / (g * g)).margin(2e-3));
  }
}

TEST_CASE("plane mass and density") {
  const auto pl = gen::coordinate_plane(3, 2);
  CHECK(pl.mass(Point::Zero(3), 1.0) == Approx(kPi).epsilon(1e-12));
  CHECK(pl.total_mass() == Approx(9.0).epsilon(1e-12));
  CHECK(pl.mass(P3(0, 0, 5), 1.0) == 0.0);
  for (double r : {1.0, 0.5, 0.13, 0.01}) CHECK(density(pl, P3(0.21, -0.37, 0), r) == Approx(kPi).epsilon(1e-12));
  CHECK(mass_drop(pl, P3(0.1, 0.2, 0), 0.1, 0.9) == Approx(0.0).margin(1e-12));
  CHECK(monotonicity_defect(pl, P3(0.1, 0.2, 0), 0.1, 0.9) == Approx(0.0).margin(1e-14));

  const auto line = gen::coordinate_plane(2, 1);
  CHECK(line.mass(Point::Zero(2), 0.7) == Approx(1.4).epsilon(1e-14));

  const auto m3 = gen::coordinate_plane(4, 3, 1.5, 3);
  // omega_3 = 4 pi / 3; the centroid rule is first order in the leaf size.
  CHECK(density(m3, Point::Zero(4), 1.0) == Approx(4 * kPi / 3).epsilon(0.01));
}

TEST_CASE("mass quadrature is stable under refinement") {
  const auto m3 = gen::coordinate_plane(4, 3, 1.5, 3, 0.02);
  const Point x = Point::Constant(4, 0.05);
  const double a = m3.mass(x, 0.8), b = m3.with_quadrature_h(0.01).mass(x, 0.8);
  CHECK(std::abs(a - b) / b < 0.01);
  const auto cyl = gen::cylinder(gen::y_cone(), 1);
  CHECK(cyl.mass(P3(0.1, 0.2, 0.1), 0.5) == Approx(cyl.with_quadrature_h(0.005).mass(P3(0.1, 0.2, 0.1), 0.5)).epsilon(1e-12));
}

TEST_CASE("cones have constant density at the vertex") {
  const auto y = gen::y_cone();
  for (double r : {1.5, 0.5, 0.01}) CHECK(density(y, Point::Zero(2), r) == Approx(3.0).epsilon(1e-14));

  const auto tc = gen::tetrahedral_cone();
  const double expected = 3 * std::acos(-1.0 / 3);  // six arcs, each r^2 / 2 times its angle
  for (double r : {1.5, 0.5, 0.1, 0.001}) CHECK(density(tc, Point::Zero(3), r) == Approx(expected).epsilon(1e-12));
  CHECK(mass_drop(tc, Point::Zero(3), 0.1, 1.0) == Approx(0.0).margin(1e-11));
  CHECK(monotonicity_defect(tc, Point::Zero(3), 0.1, 1.0) == 0.0);

  const SimonsCone sc;
  for (double r : {1.0, 0.5, 0.25, 0.125, 0.0625})
    CHECK(density(sc, Point::Zero(8), r) == Approx(SimonsCone::vertex_density()).epsilon(1e-8));

  const auto mesh = simons::mesh(0);
  const double t0 = density(mesh, Point::Zero(8), 0.5);
  CHECK(density(mesh, Point::Zero(8), 0.125) == Approx(t0).epsilon(1e-12));
  CHECK(mass_drop(mesh, Point::Zero(8), 0.1, 0.5) == Approx(0.0).margin(1e-10));
}

TEST_CASE("simons cone mass scales like r^7") {
  const SimonsCone sc;
  std::vector<double> lx, ly;
  for (int i = 0; i <= 4; ++i) {
    const double r = std::pow(2.0, -i);
    lx.push_back(std::log(r));
    ly.push_back(std::log(sc.mass(Point::Zero(8), r)));
  }
  const double slope = (ly.back() - ly.front()) / (lx.back() - lx.front());
  CHECK(slope == Approx(7.0).margin(1e-9));
  CHECK(sc.mass(Point::Zero(8), 1.0) == Approx(std::pow(kPi, 4) / 14).epsilon(1e-8));
}

TEST_CASE("simons cone density tends to omega_7 at smooth points") {
  const SimonsCone sc;
  const double omega7 = std::pow(kPi, 3.5) / std::tgamma(4.5);
  const Point x = SimonsCone::axis_point(0.5);
  double prev = 0;
  for (double r : {0.05, 0.02, 0.005}) {
    const double th = density(sc, x, r);
    CHECK(std::abs(th - omega7) < std::abs(prev - omega7) + (prev == 0 ? 1.0 : 0.0));
    prev = th;
  }
  CHECK(prev == Approx(omega7).epsilon(1e-4));
  CHECK(sc.density_on_cone(0.5, 0.02) == Approx(density(sc, x, 0.02)).epsilon(1e-6));
}

TEST_CASE("monotonicity identity converges on stationary testbeds") {
  // Plane at distance d from x: theta_r = pi (1 - d^2 / r^2).
  const auto pl = gen::coordinate_plane(3, 2);
  const Point x = P3(0.1, 0.05, 0.2);
  CHECK(mass_drop(pl, x, 0.3, 0.6) == Approx(kPi * 0.04 * (1 / 0.09 - 1 / 0.36)).epsilon(1e-12));
  check_identity_converges(pl, x, 0.3, 0.6);

  check_identity_converges(gen::tetrahedral_cone(), P3(0.3, 0.25, 0.1), 0.1, 0.3);
  check_identity_converges(gen::cylinder(gen::y_cone(), 1), P3(0.3, 0.1, 0.2), 0.1, 0.5);
  check_identity_converges(gen::y_cone(), P2(0.3, 0.1), 0.1, 0.5);
  check_identity_converges(SimonsCone(), SimonsCone::axis_point(0.5), 0.1, 0.3);
}

TEST_CASE("density is nondecreasing on stationary testbeds") {
  const std::vector<double> radii{0.0625, 0.125, 0.25, 0.5, 1.0};
  auto check_curve = [&](const DensityCurve& c) {
    for (size_t i = 1; i < c.theta.size(); ++i) CHECK(c.theta[i] >= c.theta[i - 1] - 1e-6);
  };
  check_curve(density_curve(gen::tetrahedral_cone(), P3(0.2, 0.1, 0.3), radii));
  check_curve(density_curve(gen::y_cone(), P2(0.4, -0.2), radii));
  check_curve(density_curve(SimonsCone(), SimonsCone::axis_point(0.5), radii));
  check_curve(density_curve(SimonsCone(), Point::Constant(8, 0.1), radii));
}

TEST_CASE("spine scores") {
  const auto pl = gen::coordinate_plane(3, 2);
  for (int k = 0; k <= 1; ++k) CHECK(spine_score(pl, P3(0.2, 0.1, 0), 0.8, k).score == Approx(0.0).margin(1e-12));

  const auto cyl = gen::cylinder(gen::y_cone(), 1);
  const auto s0 = spine_score(cyl, Point::Zero(3), 1.0, 0);
  CHECK(s0.score == Approx(0.0).margin(1e-12));
  CHECK(std::abs(s0.subspace.frame()(2, 0)) == Approx(1.0).epsilon(1e-12));
  CHECK(spine_score(cyl, Point::Zero(3), 1.0, 1).score > 0.1);

  const SimonsCone sc;
  const auto ss = spine_score(sc, Point::Zero(8), 1.0, 0);
  CHECK(ss.score == Approx(0.125).epsilon(1e-6));

  auto monotone = [](const auto& v, const Point& x, double r) {
    double prev = -1;
    for (int k = 0; k < v.dim(); ++k) {
      const double s = spine_score(v, x, r, k).score;
      CHECK(s >= prev - 1e-15);
      prev = s;
    }
  };
  monotone(sc, Point::Zero(8), 1.0);
  monotone(sc, SimonsCone::axis_point(0.3), 0.2);
  monotone(gen::tetrahedral_cone(), P3(0.1, 0.1, 0.1), 0.5);
  monotone(gen::union_of_planes({LinearSubspace::coordinate(3, {0, 1}).frame(), LinearSubspace::coordinate(3, {1, 2}).frame()}),
           P3(0.05, 0.0, 0.02), 0.8);

  CHECK_THROWS(spine_score(pl, P3(0, 0, 0), 1.0, 2));
  CHECK_THROWS(spine_score(pl, P3(0, 0, 9), 1.0, 0));
}

TEST_CASE("symmetry test examples") {
  const auto pl = gen::coordinate_plane(3, 2);
  CHECK(symmetry_test(pl, P3(0.1, -0.3, 0), 0.5, 2, 1e-6));
  const SimonsCone sc;
  CHECK(symmetry_test(sc, Point::Zero(8), 0.5, 0, 1e-6));
  CHECK_FALSE(symmetry_test(sc, Point::Zero(8), 0.5, 1, 0.01));
  const Point x = SimonsCone::axis_point(0.5);
  CHECK(simons::regularity_scale(x) > 0.1);
  CHECK(symmetry_test(sc, x, 0.005, 7, 0.01));
  CHECK_FALSE(symmetry_test(sc, x, 0.4, 7, 0.01));
}

TEST_CASE("simons analytic quantities") {
  CHECK(simons::second_fundamental_norm(SimonsCone::axis_point(1.0)) == Approx(std::sqrt(6.0)).epsilon(1e-15));
  CHECK(simons::second_fundamental_norm(SimonsCone::axis_point(0.25)) == Approx(4 * std::sqrt(6.0)).epsilon(1e-15));
  const Point x = SimonsCone::axis_point(0.7);
  const double ri = simons::regularity_scale(x);
  CHECK(std::sqrt(6.0) / (0.7 - ri) == Approx(1 / ri).epsilon(1e-14));
  CHECK_THROWS(simons::second_fundamental_norm(Point::Zero(8)));

  const double c = SimonsCone::link_area() * std::pow(6.0, 3.5);
  CHECK(simons::curvature_integral(7, 0.01) == Approx(c * std::log(100.0)).epsilon(1e-14));
  // Doubling the divergence: each factor 10 in the cutoff adds c ln 10.
  CHECK(simons::curvature_integral(7, 1e-4) - simons::curvature_integral(7, 1e-2) == Approx(c * std::log(100.0)).epsilon(1e-12));
  const double lim = SimonsCone::link_area() * std::pow(6.0, 3.25) / 0.5;
  double prev = 0;
  for (double cut : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const double v = simons::curvature_integral(6.5, cut);
    CHECK(v > prev);
    CHECK(v < lim);
    prev = v;
  }
  CHECK(prev == Approx(lim).epsilon(1e-3));
  CHECK_THROWS(simons::curvature_integral(6.5, 0.0));
  CHECK_THROWS(simons::curvature_integral(-1, 0.5));

  const SimonsCone sc;
  CHECK(simons::curvature_integral_quadrature(sc, 6.5, 0.01) == Approx(simons::curvature_integral(6.5, 0.01)).epsilon(0.01));
  CHECK(simons::curvature_integral_quadrature(sc, 7.0, 0.01) == Approx(simons::curvature_integral(7.0, 0.01)).epsilon(0.01));
}

TEST_CASE("simons mesh") {
  const auto mesh = simons::mesh(0);
  CHECK(mesh.ambient_dim() == 8);
  CHECK(mesh.dim() == 7);
  CHECK(mesh.size() == 16 * 16 * 20);
  CHECK(simons::mesh_is_valid(mesh));
  for (size_t j = 0; j < mesh.size(); j += 97) CHECK(mesh.simplex_volume(j) > 0);
  auto moved = mesh.vertices();
  moved[3](0) += 1e-3;
  const SimplicialVarifold broken(8, 7, moved, mesh.simplices());
  CHECK_FALSE(simons::mesh_is_valid(broken));
  CHECK_THROWS(simons::mesh(2));
}

TEST_CASE("snowflake curves") {
  const double koch = std::sqrt(3.0) / 2;
  for (int d = 0; d <= 6; ++d) {
    const std::vector<double> eta(static_cast<size_t>(d), koch);
    const auto p = gen::snowflake_polyline(eta, d);
    double len = 0;
    for (size_t i = 0; i + 1 < p.size(); ++i) len += (p[i + 1] - p[i]).norm();
    CHECK(len == Approx(std::pow(4.0 / 3, d)).epsilon(1e-12));
    CHECK(gen::snowflake_length(eta, d) == Approx(len).epsilon(1e-12));
    CHECK(gen::polyline_is_embedded(p));
  }
  for (double pw : {1.0, 0.5}) {
    const auto eta = gen::power_sequence(pw, 8);
    const auto v = gen::snowflake(eta, 8);
    CHECK(v.size() == 65536);
    CHECK(v.total_mass() == Approx(gen::snowflake_length(eta, 8)).epsilon(1e-11));
  }
  CHECK_THROWS(gen::snowflake(std::vector<double>(4, 3.0), 4));
  CHECK_FALSE(gen::polyline_is_embedded({{0, 0}, {1, 0}, {1, 1}, {0.5, -1}}));
  CHECK_THROWS(gen::snowflake_polyline({0.5}, 2));

  const auto sf = gen::snowflake(std::vector<double>(3, 0.5), 3);
  const auto mu = to_measure(sf);
  REQUIRE(mu.size() == 64);
  for (size_t i = 0; i < mu.size(); ++i) CHECK(mu.weight(i) == Approx(sf.simplex_volume(i)).epsilon(1e-15));
  CHECK(mu.total_mass() == Approx(sf.total_mass()).epsilon(1e-14));
}

TEST_CASE("to_measure preserves total mass") {
  const auto pl = gen::coordinate_plane(3, 2, 1.0, 2);
  for (int level : {0, 1, 3}) {
    const auto mu = to_measure(pl, level);
    CHECK(mu.size() == pl.size() * (size_t{1} << level));
    CHECK(mu.total_mass() == Approx(4.0).epsilon(1e-13));
  }
}

TEST_CASE("mesh files round trip") {
  const auto tc = gen::tetrahedral_cone(3);
  std::stringstream ss;
  write_off(ss, tc);
  const auto back = read_off(ss, "tc.off");
  CHECK(back.ambient_dim() == 3);
  CHECK(back.dim() == 2);
  REQUIRE(back.size() == tc.size());
  CHECK(back.simplices() == tc.simplices());
  for (size_t i = 0; i < tc.vertices().size(); ++i) CHECK(back.vertices()[i] == tc.vertices()[i]);
  CHECK(back.mass(Point::Zero(3), 0.5) == tc.mass(Point::Zero(3), 0.5));

  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return read_off(in, "m.off");
  };
  CHECK(parse("# comment\nSOFF 2 1\n2 1\n0 0\n1 0\n0 1 3\n").multiplicities()[0] == 3);
  CHECK_THROWS_WITH(parse("OFF 2 1\n"), Catch::Matchers::ContainsSubstring("m.off:1"));
  CHECK_THROWS_WITH(parse("SOFF 2 1\n2 1\n0 0\n1 0\n0 2 1\n"), Catch::Matchers::ContainsSubstring("m.off:5"));
  CHECK_THROWS_WITH(parse("SOFF 2 1\n2 1\n0 0\n1 0\n0 1 0\n"), Catch::Matchers::ContainsSubstring("multiplicity"));
  CHECK_THROWS_AS(parse("SOFF 2 1\n2 1\n0 0\n0 0\n0 1 1\n"), InputError);
  CHECK_THROWS_AS(parse("SOFF 2 1\n2 1\n0 0\n"), InputError);
  CHECK_THROWS_AS(parse("SOFF 2 1\n2 1\n0 0 0\n1 0\n0 1 1\n"), InputError);
}
