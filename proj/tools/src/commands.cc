#include "commands.h"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include "ccmtrack/certificates.h"
#include "ccmtrack/controller.h"
#include "ccmtrack/geodesic.h"
#include "ccmtrack/sim.h"
#include "config.h"

namespace ccmtrack::cli {

namespace {

struct Options {
  std::string config;
  std::string out;
  int grid = 0;
  std::uint64_t seed = 0;
  std::string checks;
  bool checks_given = false;
  std::string from;
  std::string to;
  int segments = 0;
};

// Writes "key: value" lines.
class Report {
 public:
  explicit Report(std::ostream& os) : os_(os) {}

  void Put(const std::string& key, const std::string& value) {
    os_ << key << ": " << value << '\n';
  }
  void Put(const std::string& key, double value) { Put(key, FormatNumber(value)); }
  void Put(const std::string& key, bool value) { Put(key, value ? "true" : "false"); }
  void Put(const std::string& key, const char* value) { Put(key, std::string(value)); }
  void Put(const std::string& key, std::size_t value) { Put(key, std::to_string(value)); }
  void Put(const std::string& key, int value) { Put(key, std::to_string(value)); }
  void Put(const std::string& key, const Vector& value) {
    Put(key, value.size() == 0 ? std::string("none") : FormatVector(value));
  }
  void Break() { os_ << '\n'; }

 private:
  std::ostream& os_;
};

void PutCertificate(Report& r, const CertificateReport& c) {
  r.Put("check", c.condition);
  r.Put("pass", c.pass);
  r.Put("worst_margin", c.worst_margin);
  r.Put("witness_state", c.witness_state);
  r.Put("witness_direction", c.witness_direction);
  r.Put("tolerance", c.tolerance);
  r.Put("points", c.stats.points);
  r.Put("violations", c.stats.violations);
  r.Put("margin_min", c.stats.min);
  r.Put("margin_max", c.stats.max);
  r.Put("margin_mean", c.stats.mean);
  for (const auto& [k, v] : c.extras) r.Put(k, v);
}

std::vector<std::string> SplitChecks(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ofstream OpenOutput(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open output file '" + path + "'");
  return f;
}

int Certify(const Options& o, std::ostream& out, std::ostream& err) {
  const Config cfg = LoadConfig(o.config);
  CertificateSettings s = cfg.certificate;
  if (o.grid > 0) s.grid = o.grid;
  if (o.checks_given) s.checks = SplitChecks(o.checks);
  if (s.checks.empty()) {
    err << "error: empty check list (choose from c1, killing, dual-w, robust)\n";
    return kExitUsage;
  }
  for (const auto& c : s.checks) {
    if (c != "c1" && c != "killing" && c != "dual-w" && c != "robust") {
      err << "error: unknown check '" << c
          << "' (choose from c1, killing, dual-w, robust)\n";
      return kExitUsage;
    }
  }
  const SystemModel& sys = cfg.RequireSystem();
  const MetricField& metric = cfg.RequireMetric();
  const Grid grid = Grid::Uniform(sys.domain(), s.grid);
  const CheckOptions opts{s.tol, s.threads};

  std::ostringstream body;
  Report r(body);
  r.Put("system", sys.name());
  r.Put("metric", cfg.metric_label);
  r.Put("role", ToString(metric.role()));
  r.Put("grid", std::to_string(s.grid) + " per axis, " +
                    std::to_string(grid.size()) + " points");
  r.Break();

  bool all = true;
  auto run = [&](const std::string& name, auto&& fn) {
    try {
      const CertificateReport c = fn();
      PutCertificate(r, c);
      all = all && c.pass;
    } catch (const MetricBoundError& e) {
      r.Put("check", name);
      r.Put("pass", false);
      r.Put("error", e.what());
      all = false;
    }
    r.Break();
  };

  run("metric-bounds", [&] { return CheckMetricBounds(metric, grid, opts); });
  for (const auto& c : s.checks) {
    if (c == "c1") {
      run(c, [&] { return CheckC1(sys, PrimalMetric(metric), grid, opts); });
    } else if (c == "killing") {
      run(c, [&] { return CheckKillingPde(sys, PrimalMetric(metric), grid, opts); });
    } else if (c == "dual-w") {
      run(c, [&] { return CheckDualW(sys, DualMetric(metric), grid, opts); });
    } else {
      const MetricField primal = PrimalMetric(metric);
      std::optional<double> gamma0 = s.robust_gamma0;
      bool bisected = false;
      if (!gamma0) {
        gamma0 = RobustGamma0Min(sys, primal, grid, s.robust_lambda,
                                 s.robust_form, opts);
        bisected = true;
      }
      if (!gamma0) {
        r.Put("check", "robust");
        r.Put("pass", false);
        r.Put("lambda", s.robust_lambda);
        r.Put("gamma0_min", "none");
        all = false;
        r.Break();
        continue;
      }
      run(c, [&] {
        CertificateReport rep = CheckRobust(sys, primal, grid, s.robust_lambda,
                                            *gamma0, s.robust_form, opts);
        if (bisected) rep.extras.emplace_back("gamma0_min", *gamma0);
        return rep;
      });
    }
  }
  r.Put("overall", all ? "pass" : "fail");
  out << body.str();
  if (!o.out.empty()) OpenOutput(o.out) << body.str();
  return all ? kExitPass : kExitFail;
}

int Synthesize(const Options& o, std::ostream& out, std::ostream& err) {
  const Config cfg = LoadConfig(o.config);
  const SystemModel& sys = cfg.RequireSystem();
  const MetricField metric = PrimalMetric(cfg.RequireMetric());
  const int per_axis = o.grid > 0 ? o.grid : cfg.certificate.grid;
  const Grid grid = Grid::Uniform(sys.domain(), per_axis);
  const CheckOptions opts{cfg.certificate.tol, cfg.certificate.threads};

  Report r(out);
  CertificateReport c1;
  try {
    c1 = CheckC1(sys, metric, grid, opts);
  } catch (const MetricBoundError& e) {
    err << "error: certification failed: " << e.what() << '\n';
    return kExitFail;
  }
  if (!c1.pass) {
    err << "error: metric is not certified; synthesis needs a passing c1 check\n";
    PutCertificate(r, c1);
    return kExitFail;
  }
  const double rate = -c1.worst_margin;
  DampingParams params = cfg.damping;
  if (!(params.r > 0.0)) params.r = 1.0 / rate;
  const MetricField rated = metric.lambda() > 0.0 ? metric : metric.WithLambda(rate);

  std::optional<GainField> gain;
  try {
    gain.emplace(SynthesizeGain(sys, rated, params, grid));
  } catch (const SynthesisError& e) {
    err << "error: " << e.what() << " at x = " << FormatVector(e.witness()) << '\n';
    return kExitFail;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitFail;
  }

  namespace pt = boost::property_tree;
  pt::ptree tree = cfg.tree;
  tree.erase("gain");
  tree.erase("synthesis");
  if (metric.lambda() == 0.0 && cfg.metric->role() == MetricRole::kPrimal) {
    tree.put_child("metric.lambda", pt::ptree(FormatNumber(rate)));
  }
  pt::ptree g;
  const Vector center = sys.domain().Center();
  if (gain->is_constant()) {
    const Matrix k = gain->Eval(center);
    g.put("source", "expression");
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        g.put("K_" + std::to_string(i + 1) + "_" + std::to_string(j + 1),
              FormatNumber(k(i, j)));
      }
    }
  } else {
    g.put("source", "synthesized");
  }
  g.put("r", FormatNumber(params.r));
  g.put("gamma0", FormatNumber(params.gamma0));
  g.put("gamma", params.gamma_const ? "const " + FormatNumber(*params.gamma_const)
                                    : std::string("formula"));
  tree.add_child("gain", g);

  pt::ptree meta;
  meta.put("certified_rate", FormatNumber(rate));
  meta.put("lambda0", FormatNumber(Lambda0(params.r, rate, metric.p_lo())));
  meta.put("constant_gain", gain->is_constant() ? "true" : "false");
  meta.put("degenerate", gain->degenerate() ? "true" : "false");
  const Matrix dir = gain->Direction(center);
  for (Eigen::Index i = 0; i < dir.rows(); ++i) {
    meta.put("direction_row" + std::to_string(i + 1), FormatVector(dir.row(i).transpose()));
  }
  meta.put("gamma_at_center", FormatNumber(gain->Gamma(center)));
  tree.add_child("synthesis", meta);

  if (o.out.empty()) {
    pt::write_ini(out, tree);
  } else {
    std::ofstream f = OpenOutput(o.out);
    pt::write_ini(f, tree);
    r.Put("certified_rate", rate);
    r.Put("r", params.r);
    r.Put("gamma0", params.gamma0);
    r.Put("gamma", params.gamma_const ? "const " + FormatNumber(*params.gamma_const)
                                      : std::string("formula"));
    r.Put("lambda0", Lambda0(params.r, rate, metric.p_lo()));
    r.Put("constant_gain", gain->is_constant());
    r.Put("degenerate", gain->degenerate());
    r.Put("output", o.out);
  }
  if (gain->degenerate()) err << "warning: gamma0 = 0 and gamma = 0 give K = 0\n";
  if (params.gamma_const) {
    err << "note: constant gamma is certified only on the bounded domain box\n";
  }
  return kExitPass;
}

int Geodesic(const Options& o, std::ostream& out, std::ostream& err) {
  const Config cfg = LoadConfig(o.config);
  if (o.from.empty() || o.to.empty()) {
    err << "error: geodesic needs --from and --to\n";
    return kExitUsage;
  }
  const MetricField metric = PrimalMetric(cfg.RequireMetric());
  const Vector a = ParseVector(o.from, "--from");
  const Vector b = ParseVector(o.to, "--to");
  if (a.size() != metric.n() || b.size() != metric.n()) {
    err << "error: --from/--to must have " << metric.n() << " entries\n";
    return kExitUsage;
  }
  const int segments =
      o.segments > 0 ? o.segments : cfg.simulation.run.geodesic_segments;
  if (segments < 2) {
    err << "error: --segments must be >= 2\n";
    return kExitUsage;
  }
  const GeodesicPath path =
      SolveGeodesic(metric, a, b, segments, cfg.simulation.run.geodesic);
  const double straight = RiemannEnergy(metric, StraightPath(a, b, segments));

  double deviation = 0.0;
  const Matrix chord = StraightPath(a, b, segments);
  for (int k = 1; k < segments; ++k) {
    deviation = std::max(deviation, (path.nodes.row(k) - chord.row(k)).norm());
  }

  const std::string csv_path = o.out.empty() ? "geodesic.csv" : o.out;
  {
    std::ofstream f = OpenOutput(csv_path);
    f << "mu";
    for (int i = 1; i <= metric.n(); ++i) f << ",x" << i;
    f << '\n' << std::setprecision(17);
    for (int k = 0; k <= segments; ++k) {
      f << static_cast<double>(k) / segments;
      for (int i = 0; i < metric.n(); ++i) f << ',' << path.nodes(k, i);
      f << '\n';
    }
  }
  Report r(out);
  r.Put("energy", path.energy);
  r.Put("distance", path.distance());
  r.Put("straight_energy", straight);
  r.Put("iterations", path.iterations);
  r.Put("converged", path.converged);
  r.Put("speed_spread", path.speed_spread);
  r.Put("chord_deviation", deviation);
  r.Put("segments", segments);
  r.Put("output", csv_path);
  if (!path.converged) {
    err << "error: geodesic solver did not converge; best path written\n";
    return kExitNumerical;
  }
  return kExitPass;
}

int Simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const Config cfg = LoadConfig(o.config);
  const SystemModel& sys = cfg.RequireSystem();
  const ReferenceSpec& ref = cfg.RequireReference();
  RunConfig run = cfg.simulation.run;
  if (run.x0.size() == 0) throw ConfigError("[simulation] needs x0");

  MetricField metric =
      cfg.metric ? PrimalMetric(*cfg.metric)
                 : MetricField::Constant(Matrix::Identity(sys.n(), sys.n()), 0.0,
                                         MetricRole::kPrimal);
  GainField gain = cfg.gain ? *cfg.gain
                            : GainField::Constant(Matrix::Zero(sys.m(), sys.n()));
  if (!cfg.gain && run.controller != ControllerKind::kCustom) {
    throw ConfigError("the " + std::string(ToString(run.controller)) +
                      " controller needs a [gain]");
  }

  SimTrace trace;
  try {
    trace = RunClosedLoop(sys, metric, gain, ref, run);
  } catch (const ExactnessError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::string csv_path = o.out.empty() ? "trace.csv" : o.out;
  {
    std::ofstream f = OpenOutput(csv_path);
    WriteTraceCsv(f, trace);
  }

  const double threshold = cfg.simulation.threshold;
  Report r(out);
  r.Put("controller", ToString(run.controller));
  r.Put("samples", trace.t.size());
  r.Put("final_time", trace.t.empty() ? 0.0 : trace.t.back());
  r.Put("final_error", trace.final_error());
  r.Put("max_error", trace.max_error());
  r.Put("threshold", threshold);
  const double horizon = trace.t.empty() ? 0.0 : trace.t.back();
  const auto window = cfg.simulation.decay_window.value_or(
      std::make_pair(0.25 * run.horizon, 0.75 * run.horizon));
  r.Put("decay_window", FormatNumber(window.first) + ", " + FormatNumber(window.second));
  try {
    if (window.second > horizon) throw std::invalid_argument("truncated");
    r.Put("decay_rate", DecayRate(trace, window.first, window.second));
  } catch (const std::exception&) {
    r.Put("decay_rate", "n/a");
  }
  if (trace.has_z()) r.Put("final_observer_gap", (trace.z.back() - trace.x.back()).norm());
  r.Put("domain_violations", trace.domain_violations);
  if (trace.domain_violations > 0) {
    r.Put("first_violation_time", trace.first_violation_time);
  }
  r.Put("completed", trace.completed());
  if (trace.failure) {
    r.Put("failure", *trace.failure);
    r.Put("failure_time", trace.failure_time);
  }
  r.Put("output", csv_path);

  if (cfg.sweep.enabled) {
    SweepOptions sw = cfg.sweep.options;
    if (o.seed != 0) sw.seed = o.seed;
    const std::vector<SweepRow> rows =
        PerturbationSweep(sys, metric, gain, ref, run, sw);
    r.Put("sweep_seed", std::to_string(sw.seed));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string p = "sweep_" + std::to_string(i + 1) + "_";
      r.Put(p + "radius", rows[i].radius);
      r.Put(p + "samples", rows[i].samples);
      r.Put(p + "converged", rows[i].converged);
      r.Put(p + "fraction", rows[i].fraction());
    }
  }

  if (!trace.completed()) {
    err << "error: simulation stopped at t = " << trace.failure_time << ": "
        << *trace.failure << " (truncated trace written)\n";
    return kExitNumerical;
  }
  return trace.final_error() < threshold ? kExitPass : kExitFail;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Contraction-metric certification, tracking-controller synthesis "
               "and closed-loop simulation",
               "ccmtrack"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Configuration file")->required();
    sub->add_option("--out", o.out, "Output path");
  };
  CLI::App* certify = app.add_subcommand("certify", "Check metric conditions on a grid");
  common(certify);
  certify->add_option("--grid", o.grid, "Grid points per axis");
  CLI::Option* checks_opt = certify->add_option(
      "--checks", o.checks, "Comma-separated subset of c1,killing,dual-w,robust");
  CLI::App* synth = app.add_subcommand("synthesize", "Emit the damping-injection gain");
  common(synth);
  synth->add_option("--grid", o.grid, "Grid points per axis");
  CLI::App* geo = app.add_subcommand("geodesic", "Minimal geodesic between two states");
  common(geo);
  geo->add_option("--from", o.from, "Start state, e.g. \"0,0\"");
  geo->add_option("--to", o.to, "End state");
  geo->add_option("--segments", o.segments, "Number of path segments");
  CLI::App* sim = app.add_subcommand("simulate", "Run the closed loop and write a CSV trace");
  common(sim);
  sim->add_option("--seed", o.seed, "Seed for the perturbation sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitPass;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  o.checks_given = checks_opt->count() > 0;

  try {
    if (certify->parsed()) return Certify(o, out, err);
    if (synth->parsed()) return Synthesize(o, out, err);
    if (geo->parsed()) return Geodesic(o, out, err);
    return Simulate(o, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const expr::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace ccmtrack::cli
