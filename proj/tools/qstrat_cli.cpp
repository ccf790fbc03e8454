#include "qstrat/experiments.hpp"
#include "qstrat/io.hpp"
#include "qstrat/reifenberg.hpp"
#include "qstrat/simons.hpp"
#include "qstrat/stratify.hpp"
#include "qstrat/varifold.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

using namespace qs;
using io::Json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kBadInput = 2, kHypothesis = 3, kNumerical = 4 };

// Reads a flat key=value file into "--key=value" tokens.
std::vector<std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open config file");
  std::vector<std::string> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r"), r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw InputError(path + ":" + std::to_string(lineno) + ": empty key");
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

// Config values go right after the subcommand names so that later command-line flags override them.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<std::string> config;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw InputError("--config needs a file");
      config = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (!config) return args;
  size_t pos = 0;
  while (pos < args.size() && !args[pos].empty() && args[pos][0] != '-' && pos < 2) ++pos;
  const auto extra = read_config(*config);
  args.insert(args.begin() + static_cast<long>(pos), extra.begin(), extra.end());
  return args;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open");
  return in;
}

// Writes to the named file, or to stdout when the name is empty or "-".
template <class F>
void emit(const std::string& path, F&& f) {
  if (path.empty() || path == "-") {
    f(std::cout);
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw InputError(path + ": cannot write");
  f(out);
}

fs::path output_dir(const std::string& dir) {
  if (dir.empty()) throw InputError("--out directory is required");
  fs::create_directories(dir);
  return dir;
}

Point parse_point(const std::vector<double>& v, int n, const std::string& what) {
  if (v.empty()) return Point::Zero(n);
  if (static_cast<int>(v.size()) != n)
    throw InputError(what + ": expected " + std::to_string(n) + " coordinates, got " + std::to_string(v.size()));
  return Eigen::Map<const Vec>(v.data(), n);
}

std::vector<Point> cloud_points(const std::string& kind, double amplitude, int half) {
  if (half < 1) throw InputError("gen cloud: --half must be positive");
  if (kind == "sine-curve") return experiments::sine_curve(amplitude, half);
  if (kind == "sine-surface") return experiments::sine_surface(amplitude, half);
  if (kind == "segment") return experiments::sine_curve(0.0, half);
  throw InputError("gen cloud: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string output;
  int n = 3, m = 2, cells = 6;
  double extent = 1.5;
  std::string eta = "1/i", format = "polyline";
  int depth = 8;
  int level = 0;
  double res = 0.01;
  std::string kind = "sine-curve";
  double amplitude = 0.002, jitter = 0;
  int half = 64;
  bool balls = false;
  std::optional<uint64_t> seed;
};

void add_gen(CLI::App& app, GenArgs& a) {
  auto* gen = app.add_subcommand("gen", "Generate meshes, curves and point clouds");
  gen->require_subcommand(1);

  auto* plane = gen->add_subcommand("plane", "Coordinate m-plane in R^n as an OFF mesh");
  plane->add_option("-o,--output", a.output, "Output file (stdout if omitted)");
  plane->add_option("--n", a.n, "Ambient dimension")->check(CLI::Range(1, 16));
  plane->add_option("--m", a.m, "Plane dimension")->check(CLI::Range(1, 16));
  plane->add_option("--extent", a.extent, "Half side length")->check(CLI::PositiveNumber);
  plane->add_option("--cells", a.cells, "Cubes per side")->check(CLI::Range(1, 64));
  plane->callback([&] {
    if (a.m > a.n) throw InputError("gen plane: need m <= n");
    const auto v = gen::coordinate_plane(a.n, a.m, a.extent, a.cells, a.res);
    emit(a.output, [&](std::ostream& os) { write_off(os, v); });
  });

  auto* flake = gen->add_subcommand("snowflake", "Snowflake curve over [0, 1]");
  flake->add_option("-o,--output", a.output, "Output file (stdout if omitted)");
  flake->add_option("--eta-seq", a.eta, "Sequence: 1/i, C/i, i^-P, C*i^-P, 1/sqrt(i) or const:C");
  flake->add_option("--depth", a.depth, "Refinement depth")->check(CLI::Range(0, 12));
  flake->add_option("--format", a.format, "polyline, measure, balls or off")
      ->check(CLI::IsMember({"polyline", "measure", "balls", "off"}));
  flake->callback([&] {
    const auto eta = io::parse_eta_sequence(a.eta, a.depth);
    const auto p = gen::snowflake_polyline(eta, a.depth);
    if (!gen::polyline_is_embedded(p)) throw InputError("gen snowflake: the curve self-intersects");
    double measured = 0;
    for (size_t i = 0; i + 1 < p.size(); ++i) measured += (p[i + 1] - p[i]).norm();
    emit(a.output, [&](std::ostream& os) {
      if (a.format == "polyline") {
        io::write_polyline_csv(os, p);
      } else if (a.format == "off") {
        write_off(os, gen::snowflake(eta, a.depth));
      } else {
        const auto b = experiments::snowflake_balls(eta, a.depth);
        if (a.format == "balls")
          io::write_ball_csv(os, b);
        else
          write_measure_csv(os, b.measure());
      }
    });
    if (!a.output.empty() && a.output != "-")
      io::write_json(std::cout, io::document("gen snowflake", Json{{"eta_seq", a.eta},
                                                                    {"depth", a.depth},
                                                                    {"vertices", p.size()},
                                                                    {"length", io::num(measured)},
                                                                    {"recursion", io::num(gen::snowflake_length(eta, a.depth))}}));
  });

  auto* sim = gen->add_subcommand("simons", "Triangulated Simons cone over B_2(0) as an OFF mesh");
  sim->add_option("-o,--output", a.output, "Output file (stdout if omitted)");
  sim->add_option("--level", a.level, "Refinement level of the link triangulation")->check(CLI::Range(0, 1));
  sim->add_option("--res", a.res, "Quadrature step")->check(CLI::Range(1e-6, 0.5));
  sim->callback([&] {
    const auto v = simons::mesh(a.level, 2.0, a.res);
    if (!simons::mesh_is_valid(v)) throw NumericalFailure("gen simons: mesh failed validity checks");
    emit(a.output, [&](std::ostream& os) { write_off(os, v); });
  });

  auto* cloud = gen->add_subcommand("cloud", "Samples of a Lipschitz graph as a measure or ball file");
  cloud->add_option("-o,--output", a.output, "Output file (stdout if omitted)");
  cloud->add_option("--kind", a.kind, "sine-curve, sine-surface or segment");
  cloud->add_option("--amplitude", a.amplitude, "Graph amplitude");
  cloud->add_option("--half", a.half, "Samples per unit along each axis");
  cloud->add_option("--jitter", a.jitter, "Uniform perturbation, relative to the spacing (needs --seed)")
      ->check(CLI::Range(0.0, 0.4));
  cloud->add_option("--seed", a.seed, "Random seed");
  cloud->add_flag("--balls", a.balls, "Write disjoint balls instead of a weighted measure");
  cloud->callback([&] {
    auto pts = cloud_points(a.kind, a.amplitude, a.half);
    const int k = a.kind == "sine-surface" ? 2 : 1;
    if (a.jitter > 0) {
      if (!a.seed) throw InputError("gen cloud: --jitter needs --seed");
      std::mt19937_64 rng(*a.seed);
      std::uniform_real_distribution<double> u(-a.jitter / a.half, a.jitter / a.half);
      for (auto& p : pts)
        for (int d = 0; d < k; ++d) p(d) += u(rng);
    }
    const auto b = ball_system_from_points(k, pts);
    emit(a.output, [&](std::ostream& os) {
      if (a.balls) {
        io::write_ball_csv(os, b);
      } else {
        const std::vector<double> w(pts.size(), std::pow(1.0 / a.half, k));
        write_measure_csv(os, WeightedPointMeasure::from_points(pts, w));
      }
    });
  });
}

// ---------------------------------------------------------------------------------------------
// beta

struct BetaArgs {
  std::string input, output;
  int k = 1, alpha_min = 0, alpha_max = 6;
  double gate = -1;
  std::vector<size_t> centers;
};

void add_beta(CLI::App& app, BetaArgs& a) {
  auto* c = app.add_subcommand("beta", "Displacement profiles and Dini sums at atoms of a measure");
  c->add_option("-i,--input", a.input, "Measure CSV (x1..xn,weight)")->required();
  c->add_option("-o,--output", a.output, "Output CSV (stdout if omitted)");
  c->add_option("--k", a.k, "Plane dimension")->check(CLI::PositiveNumber);
  c->add_option("--alpha-min", a.alpha_min, "Coarsest scale 2^-alpha");
  c->add_option("--alpha-max", a.alpha_max, "Finest scale 2^-alpha");
  c->add_option("--gate", a.gate, "Mass gate (default omega_k 40^-k)");
  c->add_option("--centers", a.centers, "Atom indices to use as centres (default all)")->delimiter(',');
  c->callback([&] {
    auto in = open_input(a.input);
    const auto mu = read_measure_csv(in, a.input);
    if (mu.empty()) throw InputError(a.input + ": no atoms");
    if (a.k >= mu.dim()) throw InputError("beta: need k < n");
    if (a.alpha_max < a.alpha_min) throw InputError("beta: need alpha-min <= alpha-max");
    const double gate = a.gate < 0 ? default_gate(a.k) : a.gate;
    std::vector<size_t> idx = a.centers;
    if (idx.empty())
      for (size_t i = 0; i < mu.size(); ++i) idx.push_back(i);
    for (size_t i : idx)
      if (i >= mu.size()) throw InputError("beta: centre index " + std::to_string(i) + " out of range");
    std::vector<DisplacementProfile> prof(idx.size());
    std::vector<double> dini(idx.size());
    const double r_top = std::ldexp(1.0, -a.alpha_min);
    parallel_for(idx.size(), [&](size_t j) {
      const Point x = mu.atom(idx[j]);
      prof[j] = displacement_profile(mu, x, a.k, a.alpha_min, a.alpha_max, gate);
      dini[j] = dini_sum(mu, x, r_top, a.k, gate);
    });
    emit(a.output, [&](std::ostream& os) {
      std::vector<std::string> h{"center"};
      for (int d = 0; d < mu.dim(); ++d) h.push_back("x" + std::to_string(d + 1));
      for (const char* s : {"alpha", "r", "D", "gated", "dini"}) h.emplace_back(s);
      io::CsvWriter w(os, h);
      for (size_t j = 0; j < idx.size(); ++j)
        for (size_t t = 0; t < prof[j].r.size(); ++t) {
          os << idx[j] << ',';
          for (int d = 0; d < mu.dim(); ++d) os << prof[j].center(d) << ',';
          w.row(prof[j].alpha[t], prof[j].r[t], prof[j].values[t], prof[j].gated[t] ? 1 : 0, dini[j]);
        }
    });
  });
}

// ---------------------------------------------------------------------------------------------
// reifenberg

struct ReifArgs {
  std::string input, out;
  int k = 1, depth = 3;
  double delta = 0.1, gate = -1, r0 = 1.0, rho = 0.25;
  std::vector<double> center;
};

int run_reifenberg(const ReifArgs& a) {
  auto in = open_input(a.input);
  const auto b = io::read_ball_csv(in, a.k, a.input);
  if (const auto o = b.overlap())
    throw InputError(a.input + ": balls " + std::to_string(o->first) + " and " + std::to_string(o->second) + " overlap");
  const fs::path dir = output_dir(a.out);
  const Point c = parse_point(a.center, b.ambient_dim(), "--center");
  const auto hyp = check_hypothesis(b, a.delta, a.gate);
  Json body{{"input", a.input}, {"hypothesis", io::hypothesis(hyp)}, {"packing", io::packing(packing_verdict(b))}};
  int code = kOk;
  if (!hyp.pass) {
    code = kHypothesis;
  } else {
    ReifenbergOptions opt;
    opt.depth = a.depth;
    opt.rho = a.rho;
    opt.gate = a.gate;
    const auto t = construct(b, c, a.r0, opt);
    body["trace"] = io::trace(t);
    body["trace_packing"] = io::packing(packing_verdict(t));
    emit((dir / "levels.csv").string(), [&](std::ostream& os) { io::trace_csv(os, t); });
    if (!t.completed) code = kNumerical;
  }
  emit((dir / "reifenberg.json").string(),
       [&](std::ostream& os) { io::write_json(os, io::document("reifenberg", body)); });
  if (code == kHypothesis)
    std::cerr << "qstrat: hypothesis check failed: worst Dini value " << hyp.worst << " exceeds delta " << a.delta
              << '\n';
  if (code == kNumerical) std::cerr << "qstrat: construction stopped: " << body["trace"]["failure"].get<std::string>() << '\n';
  return code;
}

// ---------------------------------------------------------------------------------------------
// stratify

struct StratArgs {
  std::string input, builtin, samples, out;
  double eps = 0.05, r = 0.02, h = 0.01, radius = 0.5, eta = 0.1;
  int covering_k = -1;
};

std::vector<Point> mesh_samples(const SimplicialVarifold& v, double radius) {
  std::vector<Point> out;
  for (const auto& p : v.vertices())
    if (p.norm() <= radius) out.push_back(p);
  for (size_t j = 0; j < v.size(); ++j) {
    const Point c = v.simplex_points(j).rowwise().mean();
    if (c.norm() <= radius) out.push_back(c);
  }
  return out;
}

template <class V>
Json stratify_report(const V& v, const std::vector<Point>& samples, const StratArgs& a) {
  for (const auto& s : samples)
    if (s.size() != v.ambient_dim()) throw InputError("stratify: sample dimension differs from the varifold");
  const auto labels = stratify_samples(v, samples, a.eps, a.r);
  Json body{{"eps", io::num(a.eps)},
            {"r", io::num(a.r)},
            {"quadrature_h", io::num(a.h)},
            {"m", v.dim()},
            {"n", v.ambient_dim()},
            {"samples", samples.size()},
            {"strata", io::strata(labels, v.dim())}};
  if (a.covering_k >= 0)
    body["covering"] = io::covering(covering_construct(v, samples, Point::Zero(v.ambient_dim()), a.covering_k, a.eps, a.eta, a.r));
  return body;
}

int run_stratify(const StratArgs& a) {
  if (a.input.empty() == a.builtin.empty()) throw InputError("stratify: give exactly one of --input or --builtin");
  const fs::path dir = output_dir(a.out);
  std::vector<Point> samples;
  if (!a.samples.empty()) {
    auto in = open_input(a.samples);
    const auto mu = read_measure_csv(in, a.samples);
    for (size_t i = 0; i < mu.size(); ++i) samples.push_back(mu.atom(i));
  }
  Json body;
  if (!a.builtin.empty()) {
    if (a.builtin != "simons") throw InputError("stratify: unknown builtin '" + a.builtin + "'");
    if (samples.empty()) samples = experiments::simons_samples();
    body = stratify_report(SimonsCone(a.h), samples, a);
    body["varifold"] = "simons";
  } else {
    auto in = open_input(a.input);
    const auto v = read_off(in, a.input, a.h);
    if (samples.empty()) samples = mesh_samples(v, a.radius);
    body = stratify_report(v, samples, a);
    body["varifold"] = a.input;
  }
  emit((dir / "strata.json").string(), [&](std::ostream& os) { io::write_json(os, io::document("stratify", body)); });
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// simons

struct SimonsArgs {
  std::string out;
  std::optional<uint64_t> seed;
  size_t tube_samples = 40000;
  double h = 0.01, eps = 0.05;
};

int run_simons(const SimonsArgs& a) {
  if (!a.seed) throw InputError("simons: --seed is required (tube volumes are Monte Carlo)");
  const fs::path dir = output_dir(a.out);
  experiments::SimonsOptions opt;
  opt.seed = *a.seed;
  opt.tube_samples = a.tube_samples;
  opt.quadrature_h = a.h;
  opt.eps = a.eps;
  const auto s = experiments::simons_suite(opt);
  Json body = io::simons(s);
  body["seed"] = *a.seed;
  body["checks"] = Json{{"mass_slope", std::abs(s.mass.fit.slope - 7) <= 0.05},
                        {"density_constant", s.density_spread <= 0.01},
                        {"l7_log_linear", s.l7_fit.r2 >= 0.999},
                        {"l6_5_cauchy", s.l65_cauchy},
                        {"quadrature", s.quadrature_error_7 <= 0.01 && s.quadrature_error_65 <= 0.01},
                        {"weak_slope", std::abs(s.weak.fit.slope - 7) <= 0.1},
                        {"tube_slope", std::abs(s.tube.fit.slope - 8) <= 0.3}};
  emit((dir / "simons.json").string(), [&](std::ostream& os) { io::write_json(os, io::document("simons", body)); });
  emit((dir / "mass.svg").string(),
       [&](std::ostream& os) { io::loglog_svg(os, "Simons cone mass of B_r(0)", s.mass, "r", "mass"); });
  emit((dir / "tube.svg").string(),
       [&](std::ostream& os) { io::loglog_svg(os, "Tube volume of the 0-stratum", s.tube, "r", "volume"); });
  emit((dir / "weakL7.svg").string(),
       [&](std::ostream& os) { io::loglog_svg(os, "Mass where r_I < r", s.weak, "r", "mass"); });
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// snowflake

struct FlakeArgs {
  std::string out;
  std::vector<std::string> seqs{"1/i", "i^-0.5"};
  int length_depth = 12, dini_depth = 6;
  double budget = 0.75;
};

int run_snowflake(const FlakeArgs& a) {
  const fs::path dir = output_dir(a.out);
  Json runs = Json::object();
  emit((dir / "lengths.csv").string(), [&](std::ostream& os) {
    io::CsvWriter w(os, {"eta_seq", "depth", "length"});
    for (const auto& spec : a.seqs) {
      const auto s = experiments::snowflake_series(io::parse_eta_sequence(spec, 12), a.length_depth, a.dini_depth);
      for (size_t i = 0; i < s.depths.size(); ++i) w.row(spec, s.depths[i], s.length[i]);
      Json j = io::snowflake(s);
      bool below = true;
      for (double d : s.dini) below = below && d <= a.budget;
      j["dini_below_budget"] = below;
      runs[spec] = j;
      std::vector<double> dd(s.dini_depths.begin(), s.dini_depths.end());
      const auto fit = experiments::fit_loglog(dd, s.dini);
      std::string file = "dini_" + std::to_string(runs.size()) + ".svg";
      emit((dir / file).string(), [&](std::ostream& o) { io::loglog_svg(o, "Dini sum, eta = " + spec, fit, "depth", "dini"); });
    }
  });
  emit((dir / "snowflake.json").string(), [&](std::ostream& os) {
    io::write_json(os, io::document("snowflake", Json{{"budget", io::num(a.budget)}, {"sequences", runs}}));
  });
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string output;
};

int run_report(const ReportArgs& a) {
  std::vector<std::pair<std::string, Json>> runs;
  for (const auto& spec : a.inputs) {
    std::string name, path = spec;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      name = fs::path(spec).stem().string();
    }
    auto in = open_input(path);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw InputError(path + ": " + e.what());
    }
    if (!j.is_object() || j.value("schema", 0) != io::kSchema) throw InputError(path + ": not a schema-1 report");
    runs.emplace_back(name, std::move(j));
  }
  emit(a.output, [&](std::ostream& os) { io::write_json(os, io::merge(runs)); });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantitative stratification and Reifenberg-type rectifiability tools", "qstrat"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_doc;
  app.add_option("--config", config_doc, "Flat key=value file; command-line flags take precedence");

  GenArgs gen_args;
  BetaArgs beta_args;
  ReifArgs reif;
  StratArgs strat;
  SimonsArgs sim;
  FlakeArgs flake;
  ReportArgs rep;
  int code = kOk;

  add_gen(app, gen_args);
  add_beta(app, beta_args);

  auto* rc = app.add_subcommand("reifenberg", "Hypothesis check and discrete Reifenberg construction on a ball file");
  rc->add_option("-i,--input", reif.input, "Ball CSV (x1..xn,radius)")->required();
  rc->add_option("--out", reif.out, "Output directory")->required();
  rc->add_option("--k", reif.k, "Intrinsic dimension")->check(CLI::Range(1, 2));
  rc->add_option("--delta", reif.delta, "Dini budget")->check(CLI::PositiveNumber);
  rc->add_option("--gate", reif.gate, "Mass gate (default omega_k 40^-k)");
  rc->add_option("--center", reif.center, "Centre of the top ball")->delimiter(',');
  rc->add_option("--r0", reif.r0, "Top radius")->check(CLI::PositiveNumber);
  rc->add_option("--rho", reif.rho, "Scale ratio")->check(CLI::Range(0.01, 0.5));
  rc->add_option("--depth", reif.depth, "Number of levels")->check(CLI::Range(0, 12));
  rc->callback([&] { code = run_reifenberg(reif); });

  auto* sc = app.add_subcommand("stratify", "Quantitative strata of a mesh or built-in varifold");
  sc->add_option("-i,--input", strat.input, "OFF mesh");
  sc->add_option("--builtin", strat.builtin, "Built-in varifold (simons)");
  sc->add_option("--samples", strat.samples, "Sample points as a measure CSV (weights ignored)");
  sc->add_option("--out", strat.out, "Output directory")->required();
  sc->add_option("--eps", strat.eps, "Symmetry tolerance")->check(CLI::PositiveNumber);
  sc->add_option("--r", strat.r, "Smallest scale")->check(CLI::Range(1e-6, 0.999));
  sc->add_option("--quadrature-h", strat.h, "Quadrature step")->check(CLI::Range(1e-6, 0.5));
  sc->add_option("--radius", strat.radius, "Default samples: vertices and centroids within this radius of 0");
  sc->add_option("--covering-k", strat.covering_k, "Also run the covering construction for this k");
  sc->add_option("--eta", strat.eta, "Energy drop per covering round")->check(CLI::Range(1e-6, 0.999));
  sc->callback([&] { code = run_stratify(strat); });

  auto* si = app.add_subcommand("simons", "Simons cone scaling, weak-L7 and tube-volume experiments");
  si->add_option("--out", sim.out, "Output directory")->required();
  si->add_option("--seed", sim.seed, "Random seed for Monte Carlo tube volumes");
  si->add_option("--tube-samples", sim.tube_samples, "Monte Carlo samples per tube")->check(CLI::Range(10000, 10000000));
  si->add_option("--quadrature-h", sim.h, "Quadrature step")->check(CLI::Range(1e-4, 0.5));
  si->add_option("--eps", sim.eps, "Symmetry tolerance")->check(CLI::PositiveNumber);
  si->callback([&] { code = run_simons(sim); });

  auto* fc = app.add_subcommand("snowflake", "Length, Dini and packing sums across snowflake depths");
  fc->add_option("--out", flake.out, "Output directory")->required();
  fc->add_option("--eta-seq", flake.seqs, "Sequences to compare")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  fc->add_option("--length-depth", flake.length_depth, "Deepest length")->check(CLI::Range(1, 12));
  fc->add_option("--dini-depth", flake.dini_depth, "Deepest Dini sum")->check(CLI::Range(2, 7));
  fc->add_option("--budget", flake.budget, "Dini budget")->check(CLI::PositiveNumber);
  fc->callback([&] { code = run_snowflake(flake); });

  auto* rp = app.add_subcommand("report", "Merge JSON reports into one document");
  rp->add_option("inputs", rep.inputs, "Reports as path or name=path")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  rp->add_option("-o,--output", rep.output, "Output file (stdout if omitted)");
  rp->callback([&] { code = run_report(rep); });

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  } catch (const NumericalFailure& e) {
    std::cerr << "qstrat: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const InputError& e) {
    std::cerr << "qstrat: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "qstrat: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "qstrat: " << e.what() << '\n';
    return kNumerical;
  }
  return code;
}
