#include "config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <boost/property_tree/ini_parser.hpp>

namespace ccmtrack::cli {

namespace pt = boost::property_tree;

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string Unquote(std::string s) {
  s = Trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') &&
      s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// Read-only view of one section that tracks which keys were consumed.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree)
      : name_(std::move(name)), tree_(tree) {}

  bool present() const { return tree_ != nullptr; }
  const std::string& name() const { return name_; }

  bool Has(const std::string& key) const {
    return tree_ != nullptr && tree_->find(key) != tree_->not_found();
  }

  std::optional<std::string> Get(const std::string& key) {
    if (!Has(key)) return std::nullopt;
    used_.insert(key);
    return Unquote(tree_->get<std::string>(pt::ptree::path_type(key, '\0')));
  }

  std::string Require(const std::string& key) {
    auto v = Get(key);
    if (!v) throw ConfigError("[" + name_ + "] missing key '" + key + "'");
    return *v;
  }

  std::optional<double> Number(const std::string& key) {
    auto v = Get(key);
    if (!v) return std::nullopt;
    return ParseNumber(*v, "[" + name_ + "] " + key);
  }

  std::optional<int> Integer(const std::string& key) {
    auto v = Number(key);
    if (!v) return std::nullopt;
    if (*v != std::floor(*v) || std::abs(*v) > 1e9) {
      throw ConfigError("[" + name_ + "] " + key + " must be an integer");
    }
    return static_cast<int>(*v);
  }

  std::optional<bool> Bool(const std::string& key) {
    auto v = Get(key);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
    throw ConfigError("[" + name_ + "] " + key + " must be a boolean");
  }

  std::optional<Vector> Vec(const std::string& key) {
    auto v = Get(key);
    if (!v) return std::nullopt;
    return ParseVector(*v, "[" + name_ + "] " + key);
  }

  expr::Expr Expression(const std::string& key, const expr::VarTable& vars) {
    const std::string text = Require(key);
    try {
      return expr::Parse(text, vars);
    } catch (const expr::ParseError& e) {
      throw ConfigError("[" + name_ + "] " + key + ": " + e.what() +
                        " (offset " + std::to_string(e.offset()) + ")");
    }
  }

  void RejectUnknown() const {
    if (tree_ == nullptr) return;
    for (const auto& [key, child] : *tree_) {
      if (!used_.count(key)) {
        throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
      }
    }
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections{"system",      "metric",     "reference",
                                      "gain",        "simulation", "certificate",
                                      "sweep",       "synthesis"};

Section Open(const pt::ptree& tree, const std::string& name) {
  auto it = tree.find(name);
  return Section(name, it == tree.not_found() ? nullptr : &it->second);
}

std::string Key(const char* prefix, int i) { return prefix + std::to_string(i); }
std::string Key(const char* prefix, int i, int j) {
  return prefix + std::to_string(i) + "_" + std::to_string(j);
}

void LoadSystem(Config& cfg, Section sec) {
  if (!sec.present()) return;
  if (auto b = sec.Get("builtin")) {
    cfg.builtin = *b;
    for (const char* k : {"n", "m", "domain_lo", "domain_hi"}) {
      if (sec.Has(k)) {
        throw ConfigError(std::string("[system] '") + k +
                          "' cannot be combined with a builtin system");
      }
    }
    try {
      cfg.system.emplace(MakeBuiltin(*b).system);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[system] ") + e.what());
    }
    sec.RejectUnknown();
    return;
  }
  const auto n = sec.Integer("n");
  const auto m = sec.Integer("m");
  if (!n || !m) throw ConfigError("[system] needs n and m (or builtin)");
  if (*n < 1 || *m < 1) throw ConfigError("[system] n and m must be positive");
  const expr::VarTable vars = SystemModel::StateVars(*n);
  std::vector<expr::Expr> f;
  for (int i = 1; i <= *n; ++i) f.push_back(sec.Expression(Key("f", i), vars));
  std::vector<std::vector<expr::Expr>> b(*n);
  for (int i = 1; i <= *n; ++i) {
    for (int j = 1; j <= *m; ++j) {
      const std::string key = Key("B_", i, j);
      b[i - 1].push_back(sec.Has(key) ? sec.Expression(key, vars)
                                      : expr::Expr::Constant(0.0));
    }
  }
  const auto lo = sec.Vec("domain_lo");
  const auto hi = sec.Vec("domain_hi");
  if (!lo || !hi) throw ConfigError("[system] needs domain_lo and domain_hi");
  const std::string name = sec.Get("name").value_or("custom");
  sec.RejectUnknown();
  try {
    cfg.system.emplace(std::move(f), std::move(b), Box{*lo, *hi}, name);
  } catch (const ModelError& e) {
    throw ConfigError(std::string("[system] ") + e.what());
  }
}

MetricRole ParseRole(const std::string& s) {
  if (s == "primal") return MetricRole::kPrimal;
  if (s == "dual") return MetricRole::kDual;
  throw ConfigError("[metric] role must be primal or dual");
}

void LoadMetric(Config& cfg, Section sec) {
  if (!sec.present()) {
    if (cfg.builtin) {
      cfg.metric.emplace(MakeBuiltin(*cfg.builtin).metric("primal"));
      cfg.metric_label = *cfg.builtin + ":primal";
    }
    return;
  }
  if (!cfg.system) throw ConfigError("[metric] requires a [system] section");
  const int n = cfg.system->n();
  std::optional<MetricField> metric;
  if (auto b = sec.Get("builtin")) {
    if (!cfg.builtin) throw ConfigError("[metric] builtin needs a builtin system");
    try {
      metric.emplace(MakeBuiltin(*cfg.builtin).metric(*b));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[metric] ") + e.what());
    }
    cfg.metric_label = *cfg.builtin + ":" + *b;
    if (auto role = sec.Get("role")) metric = metric->WithRole(ParseRole(*role));
    if (auto lambda = sec.Number("lambda")) {
      if (*lambda < 0.0) throw ConfigError("[metric] lambda must be >= 0");
      metric = metric->WithLambda(*lambda);
    }
  } else {
    const expr::VarTable vars = SystemModel::StateVars(n);
    std::vector<std::vector<expr::Expr>> entries(
        n, std::vector<expr::Expr>(n, expr::Expr::Constant(0.0)));
    for (int i = 1; i <= n; ++i) {
      for (int j = 1; j <= n; ++j) {
        const std::string key = Key("M_", i, j);
        if (!sec.Has(key)) continue;
        if (j < i) {
          throw ConfigError("[metric] give the upper triangle only (" + key + ")");
        }
        entries[i - 1][j - 1] = sec.Expression(key, vars);
      }
    }
    const MetricRole role = ParseRole(sec.Get("role").value_or("primal"));
    const double lambda = sec.Number("lambda").value_or(0.0);
    if (lambda < 0.0) throw ConfigError("[metric] lambda must be >= 0");
    const auto p_lo = sec.Number("p_lo");
    const auto p_hi = sec.Number("p_hi");
    try {
      if (p_lo && p_hi) {
        metric.emplace(std::move(entries), *p_lo, *p_hi, lambda, role);
      } else if (!p_lo && !p_hi) {
        MetricField probe(entries, 1.0, 1.0, lambda, role);
        if (!probe.is_constant()) {
          throw ConfigError(
              "[metric] p_lo and p_hi are required for state-dependent metrics");
        }
        metric.emplace(MetricField::Constant(probe.Eval(Vector::Zero(n)), lambda,
                                             role));
      } else {
        throw ConfigError("[metric] give both p_lo and p_hi or neither");
      }
    } catch (const ModelError& e) {
      throw ConfigError(std::string("[metric] ") + e.what());
    } catch (const NotSymmetricError& e) {
      throw ConfigError(std::string("[metric] ") + e.what());
    }
    cfg.metric_label = "config";
  }
  sec.RejectUnknown();
  if (metric->n() != n) throw ConfigError("[metric] dimension differs from n");
  cfg.metric = std::move(metric);
}

void LoadReference(Config& cfg, Section sec) {
  if (cfg.builtin) cfg.reference.emplace(MakeBuiltin(*cfg.builtin).reference);
  if (!sec.present()) return;
  if (!cfg.system) throw ConfigError("[reference] requires a [system] section");
  const int n = cfg.system->n();
  const int m = cfg.system->m();
  ReferenceSpec ref;
  if (cfg.reference) ref = *cfg.reference;
  if (auto xd0 = sec.Vec("xd0")) ref.xd0 = *xd0;
  const expr::VarTable vars = ReferenceSpec::RefVars(n);
  bool any_ud = false;
  std::vector<expr::Expr> ud;
  for (int i = 1; i <= m; ++i) {
    const std::string key = Key("ud", i);
    if (sec.Has(key)) {
      any_ud = true;
      ud.push_back(sec.Expression(key, vars));
    } else {
      ud.push_back(expr::Expr::Constant(0.0));
    }
  }
  if (any_ud || ref.ud.empty()) ref.ud = std::move(ud);
  sec.RejectUnknown();
  if (ref.xd0.size() != n) throw ConfigError("[reference] xd0 must have n entries");
  cfg.reference = std::move(ref);
}

void LoadGain(Config& cfg, Section sec) {
  std::string source;
  if (sec.present()) {
    source = sec.Get("source").value_or("");
  }
  if (source.empty()) {
    if (sec.present() && sec.Has("K_1_1")) {
      source = "expression";
    } else if (cfg.builtin) {
      source = "builtin";
    } else if (!sec.present()) {
      return;
    } else {
      throw ConfigError("[gain] needs source = builtin | expression | synthesized");
    }
  }
  if (!cfg.system) throw ConfigError("[gain] requires a [system] section");
  const int n = cfg.system->n();
  const int m = cfg.system->m();

  if (source == "builtin") {
    if (!cfg.builtin) throw ConfigError("[gain] builtin source needs a builtin system");
    const Builtin b = MakeBuiltin(*cfg.builtin);
    cfg.gain_source = GainSource::kBuiltin;
    cfg.gain.emplace(b.gain);
    cfg.damping = b.damping;
  } else if (source == "expression") {
    const expr::VarTable vars = SystemModel::StateVars(n);
    std::vector<std::vector<expr::Expr>> rows(m);
    for (int i = 1; i <= m; ++i) {
      for (int j = 1; j <= n; ++j) {
        const std::string key = Key("K_", i, j);
        rows[i - 1].push_back(sec.Has(key) ? sec.Expression(key, vars)
                                           : expr::Expr::Constant(0.0));
      }
    }
    cfg.gain_source = GainSource::kExpression;
    cfg.gain.emplace(GainField::FromExpressions(std::move(rows), n));
  } else if (source == "synthesized") {
    cfg.gain_source = GainSource::kSynthesized;
  } else {
    throw ConfigError("[gain] unknown source '" + source + "'");
  }

  if (sec.present()) {
    if (auto r = sec.Number("r")) cfg.damping.r = *r;
    if (auto g0 = sec.Number("gamma0")) cfg.damping.gamma0 = *g0;
    if (auto g = sec.Get("gamma")) {
      if (*g == "formula") {
        cfg.damping.gamma_const.reset();
      } else if (g->rfind("const", 0) == 0) {
        cfg.damping.gamma_const = ParseNumber(Trim(g->substr(5)), "[gain] gamma");
      } else {
        throw ConfigError("[gain] gamma must be 'formula' or 'const <value>'");
      }
    }
    sec.RejectUnknown();
  }
  if (cfg.damping.gamma0 < 0.0) throw ConfigError("[gain] gamma0 must be >= 0");

  if (cfg.gain_source == GainSource::kSynthesized) {
    if (!cfg.metric) throw ConfigError("[gain] synthesized source needs a metric");
    // Without r or a certified lambda the gain is left for `synthesize` to build.
    if (!(cfg.damping.r > 0.0) && !(cfg.metric->lambda() > 0.0)) return;
    try {
      cfg.gain.emplace(
          GainField::Synthesized(*cfg.system, PrimalMetric(*cfg.metric), cfg.damping));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[gain] ") + e.what());
    } catch (const MetricBoundError& e) {
      throw ConfigError(std::string("[gain] ") + e.what());
    }
  }
}

void LoadSimulation(Config& cfg, Section sec) {
  SimulationSettings& s = cfg.simulation;
  RunConfig& run = s.run;
  if (cfg.builtin) {
    const Scenario sc = MakeBuiltin(*cfg.builtin).scenario;
    run.controller = ParseControllerKind(sc.controller);
    run.horizon = sc.horizon;
    run.h = sc.h;
    run.x0 = sc.x0;
    run.z0 = sc.z0;
    run.ell = sc.ell;
  }
  if (!sec.present()) return;
  if (!cfg.system) throw ConfigError("[simulation] requires a [system] section");
  const int n = cfg.system->n();
  const int m = cfg.system->m();
  if (auto c = sec.Get("controller")) {
    try {
      run.controller = ParseControllerKind(*c);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[simulation] ") + e.what());
    }
  }
  if (auto v = sec.Number("T")) run.horizon = *v;
  if (auto v = sec.Number("h")) run.h = *v;
  if (auto v = sec.Vec("x0")) run.x0 = *v;
  if (auto v = sec.Vec("z0")) run.z0 = *v;
  if (auto v = sec.Number("ell")) run.ell = *v;
  if (auto v = sec.Number("threshold")) s.threshold = *v;
  if (auto v = sec.Integer("quadrature_nodes")) run.quadrature_nodes = *v;
  if (auto v = sec.Integer("geodesic_segments")) run.geodesic_segments = *v;
  if (auto v = sec.Integer("geodesic_quadrature")) run.geodesic_quadrature = *v;
  if (auto v = sec.Integer("geodesic_max_iterations")) run.geodesic.max_iterations = *v;
  if (auto v = sec.Bool("zero_order_hold")) run.zero_order_hold = *v;
  if (auto v = sec.Number("exactness_tol")) run.exactness_tol = *v;
  if (auto v = sec.Integer("exactness_grid")) {
    if (*v < 2) throw ConfigError("[simulation] exactness_grid must be >= 2");
    run.exactness_grid = Grid::Uniform(cfg.system->domain(), *v);
  }
  if (auto v = sec.Vec("decay_window")) {
    if (v->size() != 2 || !((*v)(0) < (*v)(1))) {
      throw ConfigError("[simulation] decay_window must be 'a, b' with a < b");
    }
    s.decay_window = std::make_pair((*v)(0), (*v)(1));
  }
  run.custom.clear();
  if (run.controller == ControllerKind::kCustom) {
    const expr::VarTable vars = CustomControllerVars(n, m);
    for (int i = 1; i <= m; ++i) run.custom.push_back(sec.Expression(Key("u", i), vars));
  }
  sec.RejectUnknown();
  if (!(run.horizon > 0.0) || !(run.h > 0.0)) {
    throw ConfigError("[simulation] T and h must be positive");
  }
  if (run.horizon / run.h > 1e7) throw ConfigError("[simulation] T/h exceeds 1e7");
  if (run.x0.size() != 0 && run.x0.size() != n) {
    throw ConfigError("[simulation] x0 must have n entries");
  }
  if (run.z0 && run.z0->size() != n) {
    throw ConfigError("[simulation] z0 must have n entries");
  }
}

RobustLambdaForm ParseForm(const std::string& s) {
  if (s == "identity") return RobustLambdaForm::kIdentity;
  if (s == "metric") return RobustLambdaForm::kMetric;
  throw ConfigError("[certificate] robust_lambda_form must be identity or metric");
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

void LoadCertificate(Config& cfg, Section sec) {
  CertificateSettings& c = cfg.certificate;
  if (!sec.present()) return;
  if (auto v = sec.Integer("grid")) c.grid = *v;
  if (auto v = sec.Number("tol")) c.tol = *v;
  if (auto v = sec.Integer("threads")) c.threads = *v;
  if (auto v = sec.Get("checks")) c.checks = SplitList(*v);
  if (auto v = sec.Number("robust_lambda")) c.robust_lambda = *v;
  if (auto v = sec.Get("robust_gamma0")) {
    if (*v == "auto") {
      c.robust_gamma0.reset();
    } else {
      c.robust_gamma0 = ParseNumber(*v, "[certificate] robust_gamma0");
    }
  }
  if (auto v = sec.Get("robust_lambda_form")) c.robust_form = ParseForm(*v);
  sec.RejectUnknown();
  if (c.grid < 2) throw ConfigError("[certificate] grid must be >= 2");
  if (!(c.tol > 0.0)) throw ConfigError("[certificate] tol must be positive");
}

void LoadSweep(Config& cfg, Section sec) {
  if (!sec.present()) return;
  SweepSettings& s = cfg.sweep;
  s.enabled = true;
  if (auto v = sec.Vec("radii")) {
    s.options.radii.assign(v->data(), v->data() + v->size());
  }
  if (auto v = sec.Integer("samples")) s.options.samples = *v;
  if (auto v = sec.Integer("seed")) s.options.seed = static_cast<std::uint64_t>(*v);
  if (auto v = sec.Number("threshold")) s.options.threshold = *v;
  if (auto v = sec.Integer("threads")) s.options.threads = *v;
  sec.RejectUnknown();
  if (s.options.radii.empty()) throw ConfigError("[sweep] needs radii");
  if (s.options.samples < 1) throw ConfigError("[sweep] samples must be >= 1");
  for (double r : s.options.radii) {
    if (r < 0.0) throw ConfigError("[sweep] radii must be >= 0");
  }
}

}  // namespace

const SystemModel& Config::RequireSystem() const {
  if (!system) throw ConfigError("configuration has no [system]");
  return *system;
}

const MetricField& Config::RequireMetric() const {
  if (!metric) throw ConfigError("configuration has no [metric]");
  return *metric;
}

const ReferenceSpec& Config::RequireReference() const {
  if (!reference) throw ConfigError("configuration has no [reference]");
  return *reference;
}

const GainField& Config::RequireGain() const {
  if (!gain && gain_source == GainSource::kSynthesized) {
    throw ConfigError("[gain] synthesized source needs r or a metric lambda; run synthesize");
  }
  if (!gain) throw ConfigError("configuration has no [gain]");
  return *gain;
}

double ParseNumber(std::string_view text, std::string_view what) {
  const std::string s = Trim(text);
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + ": '" + s + "' is not a number");
  }
  return v;
}

Vector ParseVector(std::string_view text, std::string_view what) {
  std::string s = Trim(text);
  if (s.size() >= 2 && ((s.front() == '(' && s.back() == ')') ||
                        (s.front() == '[' && s.back() == ']'))) {
    s = s.substr(1, s.size() - 2);
  }
  const std::vector<std::string> parts = SplitList(s);
  if (parts.empty()) throw ConfigError(std::string(what) + ": empty vector");
  Vector v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = ParseNumber(parts[i], what);
  }
  return v;
}

std::string FormatNumber(double value) {
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string FormatVector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += FormatNumber(v(i));
  }
  return out;
}

MetricField PrimalMetric(const MetricField& metric) {
  if (metric.role() == MetricRole::kPrimal) return metric;
  if (!metric.is_constant()) {
    throw ConfigError("a primal metric is required; only constant dual metrics "
                      "can be inverted");
  }
  return metric.InverseOfConstant();
}

MetricField DualMetric(const MetricField& metric) {
  if (metric.role() == MetricRole::kDual) return metric;
  if (!metric.is_constant()) {
    throw ConfigError("a dual metric is required; only constant primal metrics "
                      "can be inverted");
  }
  return metric.InverseOfConstant();
}

Config ParseConfig(std::istream& in, const std::string& origin) {
  Config cfg;
  cfg.origin = origin;
  try {
    pt::read_ini(in, cfg.tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  for (const auto& [name, child] : cfg.tree) {
    if (!kSections.count(name)) {
      throw ConfigError(child.empty() ? "key '" + name + "' outside a section"
                                      : "unknown section [" + name + "]");
    }
  }
  try {
    LoadSystem(cfg, Open(cfg.tree, "system"));
    LoadMetric(cfg, Open(cfg.tree, "metric"));
    LoadReference(cfg, Open(cfg.tree, "reference"));
    LoadGain(cfg, Open(cfg.tree, "gain"));
    LoadSimulation(cfg, Open(cfg.tree, "simulation"));
    LoadCertificate(cfg, Open(cfg.tree, "certificate"));
    LoadSweep(cfg, Open(cfg.tree, "sweep"));
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  } catch (const expr::ParseError& e) {
    throw ConfigError(e.what());
  }
  if (cfg.reference && cfg.system &&
      static_cast<int>(cfg.reference->ud.size()) != cfg.system->m()) {
    throw ConfigError("[reference] needs ud1..udm");
  }
  return cfg;
}

Config LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return ParseConfig(in, path);
}

}  // namespace ccmtrack::cli
