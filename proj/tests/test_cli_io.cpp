#include <catch_amalgamated.hpp>

#include "qstrat/io.hpp"
#include "qstrat/simons.hpp"
#include "qstrat/varifold.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qs;
using Catch::Approx;
using io::Json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = QSTRAT_CLI;

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("qstrat_test_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

// Runs the tool with stdout and stderr captured; returns the exit status.
int run(const std::string& args, const Scratch& s, std::string* out = nullptr, std::string* err = nullptr) {
  const std::string o = s / "stdout.txt", e = s / "stderr.txt";
  const int status = std::system((kCli + " " + args + " >" + o + " 2>" + e).c_str());
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  if (out) *out = slurp(o);
  if (err) *err = slurp(e);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::string& p) {
  std::ifstream in(p);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::string& p) { return Json::parse(read_file(p)); }

// Every non-integer number must sit in a {value, se} pair.
void check_numbers_carry_errors(const Json& j, const std::string& path = "") {
  if (j.is_object()) {
    if (j.contains("value")) {
      CHECK(j.contains("se"));
      CHECK(j.size() == 2);
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (j.contains("value") && (it.key() == "value" || it.key() == "se")) continue;
      check_numbers_carry_errors(*it, path + "/" + it.key());
    }
  } else if (j.is_array()) {
    for (size_t i = 0; i < j.size(); ++i) check_numbers_carry_errors(j[i], path + "/" + std::to_string(i));
  } else if (j.is_number_float()) {
    INFO("bare float at " << path);
    CHECK(false);
  }
}

// Product of the per-step length factors of a segment replaced by two thirds and a tent of height eta/3.
double tent_length(const std::vector<double>& eta, int depth) {
  double len = 1;
  for (int i = 0; i < depth; ++i) {
    const double leg = std::hypot(1.0 / 6, eta[static_cast<size_t>(i)] / 3);
    len *= 2.0 / 3 + 2 * leg;
  }
  return len;
}

}  // namespace

TEST_CASE("number helpers") {
  CHECK(io::num(1.5, 0.1) == Json{{"value", 1.5}, {"se", 0.1}});
  CHECK(io::num(std::numeric_limits<double>::infinity())["value"].is_null());
  CHECK(io::nums({1, 2}, {0.5})[1]["se"] == 0.0);
  LinearFit f;
  f.slope = 2;
  f.slope_se = 0.01;
  CHECK(io::fit(f)["slope"]["se"] == 0.01);
  check_numbers_carry_errors(io::fit(f));
}

TEST_CASE("eta sequences") {
  CHECK(io::parse_eta_sequence("1/i", 3) == std::vector<double>{1, 0.5, 1.0 / 3});
  CHECK(io::parse_eta_sequence("0.1/i", 2)[1] == Approx(0.05));
  CHECK(io::parse_eta_sequence("i^-0.5", 4)[3] == Approx(0.5));
  CHECK(io::parse_eta_sequence("1/sqrt(i)", 4)[3] == Approx(0.5));
  CHECK(io::parse_eta_sequence("0.2*i^(-2)", 2)[1] == Approx(0.05));
  CHECK(io::parse_eta_sequence("const:0.3", 5) == std::vector<double>(5, 0.3));
  CHECK(io::parse_eta_sequence("1/i", 0).empty());
  CHECK_THROWS_AS(io::parse_eta_sequence("sqrt", 3), InputError);
  CHECK_THROWS_AS(io::parse_eta_sequence("2/i", 3), InputError);
  CHECK_THROWS_AS(io::parse_eta_sequence("1/i", -1), InputError);
}

TEST_CASE("ball files") {
  const BallSystem b(1, {Vec(Eigen::Vector2d(0, 0.1)), Vec(Eigen::Vector2d(0.5, 1.0 / 3))}, {0.1, 0.2});
  std::stringstream ss;
  io::write_ball_csv(ss, b);
  const auto back = io::read_ball_csv(ss, 1);
  REQUIRE(back.size() == 2);
  CHECK(back.centers()[1](1) == 1.0 / 3);
  CHECK(back.radii()[1] == 0.2);

  auto fails_at = [](const std::string& text, const std::string& where) {
    std::stringstream in(text);
    try {
      io::read_ball_csv(in, 1, "f");
    } catch (const InputError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(where) != std::string::npos);
      return;
    }
    FAIL("no error for " << text);
  };
  fails_at("x1,x2,w\n", "f:1");
  fails_at("x1,x2,radius\n0,0,1\n0,1\n", "f:3");
  fails_at("# comment\nx1,x2,radius\n0,0,-1\n", "f:3");
  fails_at("x1,x2,radius\n\n0,abc,1\n", "f:3");
  fails_at("x1,x2,radius\n", "no balls");
}

TEST_CASE("svg plots are self-contained") {
  std::vector<double> x{0.5, 0.25, 0.125}, y;
  for (double v : x) y.push_back(3 * v * v);
  const auto s = experiments::fit_loglog(x, y);
  CHECK(s.fit.slope == Approx(2));
  std::stringstream ss;
  io::loglog_svg(ss, "test", s, "r", "m");
  const std::string svg = ss.str();
  CHECK(svg.rfind("<svg xmlns=", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("slope 2.0000") != std::string::npos);
  CHECK(svg.find("href") == std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '<') > 10);
}

TEST_CASE("merge is keyed and rejects duplicates") {
  const Json a{{"schema", 1}, {"x", io::num(1)}}, b{{"schema", 1}, {"y", io::num(2)}};
  const auto m1 = io::merge({{"b", b}, {"a", a}}).dump();
  const auto m2 = io::merge({{"a", a}, {"b", b}}).dump();
  CHECK(m1 == m2);
  CHECK(m1.find("\"a\"") < m1.find("\"b\""));
  CHECK_THROWS_AS(io::merge({{"a", a}, {"a", b}}), InputError);
}

TEST_CASE("cli gen") {
  Scratch s("gen");
  SECTION("plane") {
    REQUIRE(run("gen plane --n 3 --m 2 -o " + (s / "p.off"), s) == 0);
    std::ifstream in(s / "p.off");
    const auto v = read_off(in);
    CHECK(v.ambient_dim() == 3);
    CHECK(v.dim() == 2);
    CHECK(v.total_mass() == Approx(9.0));
  }
  SECTION("snowflake length matches the recursion") {
    std::string out;
    REQUIRE(run("gen snowflake --eta-seq 1/i --depth 8 -o " + (s / "f.csv"), s, &out) == 0);
    const auto j = Json::parse(out);
    const double oracle = tent_length(io::parse_eta_sequence("1/i", 8), 8);
    CHECK(j["length"]["value"].get<double>() == Approx(oracle).epsilon(1e-12));
    CHECK(j["recursion"]["value"].get<double>() == Approx(oracle).epsilon(1e-12));
    CHECK(j["vertices"] == 65537);
    std::ifstream in(s / "f.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "x1,x2");
  }
  SECTION("simons mesh is valid") {
    REQUIRE(run("gen simons --level 0 -o " + (s / "s.off"), s) == 0);
    std::ifstream in(s / "s.off");
    const auto v = read_off(in);
    CHECK(simons::mesh_is_valid(v));
  }
  SECTION("clouds") {
    REQUIRE(run("gen cloud --kind sine-surface --half 6 --balls -o " + (s / "b.csv"), s) == 0);
    std::ifstream in(s / "b.csv");
    CHECK(io::read_ball_csv(in, 2).disjoint());
    CHECK(run("gen cloud --jitter 0.1 -o " + (s / "j.csv"), s) == 2);
    REQUIRE(run("gen cloud --jitter 0.1 --seed 4 -o " + (s / "j1.csv"), s) == 0);
    REQUIRE(run("gen cloud --jitter 0.1 --seed 4 -o " + (s / "j2.csv"), s) == 0);
    REQUIRE(run("gen cloud --jitter 0.1 --seed 5 -o " + (s / "j3.csv"), s) == 0);
    CHECK(read_file(s / "j1.csv") == read_file(s / "j2.csv"));
    CHECK(read_file(s / "j1.csv") != read_file(s / "j3.csv"));
  }
  SECTION("bad parameters") {
    CHECK(run("gen snowflake --eta-seq const:1.5 --depth 6", s) == 2);
    CHECK(run("gen snowflake --depth 13", s) == 2);
    CHECK(run("gen plane --n 2 --m 3", s) == 2);
    CHECK(run("gen", s) == 2);
    CHECK(run("frobnicate", s) == 2);
  }
}

TEST_CASE("cli beta") {
  Scratch s("beta");
  auto rows = [&](const std::string& file) {
    std::ifstream in(file);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> out;
    while (std::getline(in, line)) {
      std::vector<double> r;
      std::stringstream ls(line);
      std::string f;
      while (std::getline(ls, f, ',')) r.push_back(std::stod(f));
      out.push_back(r);
    }
    return out;
  };
  SECTION("planar cloud has a zero profile") {
    REQUIRE(run("gen cloud --kind segment --half 32 -o " + (s / "m.csv"), s) == 0);
    REQUIRE(run("beta -i " + (s / "m.csv") + " --k 1 --centers 0,16,40 -o " + (s / "b.csv"), s) == 0);
    const auto r = rows(s / "b.csv");
    CHECK(r.size() == 3 * 7);
    for (const auto& row : r) {
      CHECK(row[5] == 0);  // D
      CHECK(row[7] == 0);  // dini
    }
  }
  SECTION("summable and divergent snowflakes separate") {
    double dini[2];
    int i = 0;
    for (const char* seq : {"0.1/i", "i^-0.5"}) {
      REQUIRE(run(std::string("gen snowflake --eta-seq ") + seq + " --depth 5 --format measure -o " + (s / "m.csv"), s) == 0);
      REQUIRE(run("beta -i " + (s / "m.csv") + " --k 1 --alpha-max 3 --centers 512 -o " + (s / "b.csv"), s) == 0);
      dini[i++] = rows(s / "b.csv")[0][7];
    }
    CHECK(dini[0] > 0);
    CHECK(dini[1] > 10 * dini[0]);
  }
  SECTION("sparse cloud rows are flagged") {
    std::ofstream(s / "sp.csv") << "x1,x2,weight\n0,0,0.001\n0.5,0,0.001\n";
    REQUIRE(run("beta -i " + (s / "sp.csv") + " --k 1 --alpha-max 2 -o " + (s / "b.csv"), s) == 0);
    for (const auto& row : rows(s / "b.csv")) CHECK(row[6] == 0);
  }
  SECTION("malformed input names the line") {
    std::ofstream(s / "bad.csv") << "x1,x2,weight\n0,0,1\n\n0,zero,1\n";
    std::string err;
    CHECK(run("beta -i " + (s / "bad.csv"), s, nullptr, &err) == 2);
    CHECK(err.find("bad.csv:4") != std::string::npos);
    CHECK(run("beta -i " + (s / "missing.csv"), s) == 2);
    CHECK(run("beta -i " + (s / "bad.csv") + " --k 0", s) == 2);
  }
}

TEST_CASE("cli reifenberg") {
  Scratch s("reif");
  REQUIRE(run("gen cloud --kind sine-curve --half 64 --balls -o " + (s / "c.csv"), s) == 0);
  SECTION("report is complete and deterministic") {
    REQUIRE(run("reifenberg -i " + (s / "c.csv") + " --k 1 --depth 3 --out " + (s / "a"), s) == 0);
    REQUIRE(run("reifenberg -i " + (s / "c.csv") + " --k 1 --depth 3 --out " + (s / "b"), s) == 0);
    const std::string ja = read_file(s / "a/reifenberg.json");
    CHECK(ja == read_file(s / "b/reifenberg.json"));
    CHECK(read_file(s / "a/levels.csv") == read_file(s / "b/levels.csv"));
    const auto j = Json::parse(ja);
    CHECK(j["schema"] == 1);
    CHECK(j["hypothesis"]["pass"] == true);
    CHECK(j["trace"]["completed"] == true);
    CHECK(j["trace"]["levels"].size() == 4);
    CHECK(j["packing"]["within"] == true);
    check_numbers_carry_errors(j);
  }
  SECTION("hypothesis failure exits with 3") {
    REQUIRE(run("gen snowflake --eta-seq const:0.5 --depth 4 --format balls -o " + (s / "f.csv"), s) == 0);
    CHECK(run("reifenberg -i " + (s / "f.csv") + " --k 1 --center 0.5,0 --r0 0.5 --out " + (s / "f"), s) == 3);
    CHECK(read_json(s / "f/reifenberg.json")["hypothesis"]["pass"] == false);
  }
  SECTION("config file with flags taking precedence") {
    std::ofstream(s / "cfg.txt") << "# run settings\ndepth = 2\nk=1\n\ndelta=0.1\n";
    REQUIRE(run("reifenberg --config " + (s / "cfg.txt") + " -i " + (s / "c.csv") + " --out " + (s / "c1"), s) == 0);
    CHECK(read_json(s / "c1/reifenberg.json")["trace"]["depth"] == 2);
    REQUIRE(run("reifenberg --config " + (s / "cfg.txt") + " -i " + (s / "c.csv") + " --depth 1 --out " + (s / "c2"), s) == 0);
    CHECK(read_json(s / "c2/reifenberg.json")["trace"]["depth"] == 1);
    std::ofstream(s / "bad.txt") << "depth 2\n";
    std::string err;
    CHECK(run("reifenberg --config " + (s / "bad.txt") + " -i " + (s / "c.csv") + " --out " + (s / "c3"), s, nullptr, &err) == 2);
    CHECK(err.find("bad.txt:1") != std::string::npos);
  }
  SECTION("bad input") {
    std::ofstream(s / "o.csv") << "x1,x2,radius\n0,0,0.2\n0.1,0,0.2\n";
    CHECK(run("reifenberg -i " + (s / "o.csv") + " --out " + (s / "o"), s) == 2);
    CHECK(run("reifenberg -i " + (s / "c.csv") + " --center 0,0,0 --out " + (s / "o"), s) == 2);
    CHECK(run("reifenberg -i " + (s / "c.csv") + " --k 2 --out " + (s / "o"), s) == 2);
  }
}

TEST_CASE("cli stratify") {
  Scratch s("strat");
  SECTION("plane gives empty strata") {
    REQUIRE(run("gen plane -o " + (s / "p.off"), s) == 0);
    REQUIRE(run("stratify -i " + (s / "p.off") + " --r 0.05 --out " + (s / "o"), s) == 0);
    const auto j = read_json(s / "o/strata.json");
    CHECK(j["samples"].get<int>() > 0);
    REQUIRE(j["strata"].size() == 2);
    for (const auto& st : j["strata"]) CHECK(st["count"] == 0);
    check_numbers_carry_errors(j);
  }
  SECTION("simons cone with covering") {
    REQUIRE(run("stratify --builtin simons --r 0.02 --covering-k 0 --out " + (s / "o"), s) == 0);
    const auto j = read_json(s / "o/strata.json");
    CHECK(j["strata"][0]["count"].get<int>() >= 1);
    CHECK(j["strata"][0]["points"][0]["value"] == Json(std::vector<double>(8, 0.0)));
    CHECK(j["covering"]["terminated"] == true);
    CHECK(j["covering"]["certificates_ok"] == true);
    check_numbers_carry_errors(j);
  }
  SECTION("bad input") {
    CHECK(run("stratify --out " + (s / "o"), s) == 2);
    CHECK(run("stratify --builtin moebius --out " + (s / "o"), s) == 2);
    std::ofstream(s / "bad.off") << "SOFF 3 2\n3 1\n0 0 0\n1 0 0\n0 1\n0 1 2 1\n";
    std::string err;
    CHECK(run("stratify -i " + (s / "bad.off") + " --out " + (s / "o"), s, nullptr, &err) == 2);
    CHECK(err.find("bad.off:5") != std::string::npos);
  }
}

TEST_CASE("cli simons and report") {
  Scratch s("simons");
  CHECK(run("simons --out " + (s / "x"), s) == 2);
  REQUIRE(run("simons --seed 7 --out " + (s / "a"), s) == 0);
  REQUIRE(run("simons --seed 7 --out " + (s / "b"), s) == 0);
  REQUIRE(run("simons --seed 8 --out " + (s / "c"), s) == 0);
  const std::string a = read_file(s / "a/simons.json");
  CHECK(a == read_file(s / "b/simons.json"));
  CHECK(a != read_file(s / "c/simons.json"));
  for (const char* f : {"mass.svg", "tube.svg", "weakL7.svg"}) CHECK(fs::exists(s.dir / "a" / f));
  const auto j = Json::parse(a);
  CHECK(j["slopes"]["mass"]["value"].get<double>() == Approx(7).margin(0.05));
  CHECK(j["slopes"]["tube"]["value"].get<double>() == Approx(8).margin(0.3));
  CHECK(j["slopes"]["weakL7"]["value"].get<double>() == Approx(7).margin(0.1));
  CHECK(j["slopes"]["L7divergence"]["r2"]["value"].get<double>() >= 0.999);
  check_numbers_carry_errors(j);

  REQUIRE(run("snowflake --length-depth 8 --dini-depth 4 --out " + (s / "f"), s) == 0);
  const auto fj = read_json(s / "f/snowflake.json");
  CHECK(fj["sequences"]["1/i"]["dini_below_budget"] == true);
  check_numbers_carry_errors(fj);

  const std::string m1 = s / "m1.json", m2 = s / "m2.json", m3 = s / "m3.json";
  REQUIRE(run("report " + (s / "a/simons.json") + " flake=" + (s / "f/snowflake.json") + " -o " + m1, s) == 0);
  REQUIRE(run("report flake=" + (s / "f/snowflake.json") + " " + (s / "a/simons.json") + " -o " + m2, s) == 0);
  REQUIRE(run("report " + (s / "b/simons.json") + " flake=" + (s / "f/snowflake.json") + " -o " + m3, s) == 0);
  CHECK(read_file(m1) == read_file(m2));
  CHECK(read_file(m1) == read_file(m3));
  const auto mj = read_json(m1);
  CHECK(mj["schema"] == 1);
  CHECK(mj["runs"].contains("simons"));
  CHECK(mj["runs"].contains("flake"));

  std::ofstream(s / "junk.json") << "{\"schema\": 1,";
  CHECK(run("report " + (s / "junk.json"), s) == 2);
  std::ofstream(s / "old.json") << "{\"schema\": 0}";
  CHECK(run("report " + (s / "old.json"), s) == 2);
}
