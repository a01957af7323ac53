#include "ccmtrack/sim.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <stdexcept>
#include <thread>

namespace ccmtrack {

const char* ToString(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kDynExt:
      return "dynext";
    case ControllerKind::kGeodesic:
      return "geodesic";
    case ControllerKind::kStatic:
      return "static";
    case ControllerKind::kCustom:
      return "custom";
  }
  return "?";
}

ControllerKind ParseControllerKind(std::string_view name) {
  if (name == "dynext") return ControllerKind::kDynExt;
  if (name == "geodesic") return ControllerKind::kGeodesic;
  if (name == "static") return ControllerKind::kStatic;
  if (name == "custom") return ControllerKind::kCustom;
  throw std::invalid_argument("unknown controller kind '" + std::string(name) +
                              "' (expected dynext, geodesic, static or custom)");
}

expr::VarTable CustomControllerVars(int n, int m) {
  return expr::VarTable({"t"})
      .Concat(expr::VarTable::Indexed("x", n))
      .Concat(expr::VarTable::Indexed("xd", n))
      .Concat(expr::VarTable::Indexed("z", n))
      .Concat(expr::VarTable::Indexed("ud", m));
}

double SimTrace::max_error() const {
  return err.empty() ? 0.0 : *std::max_element(err.begin(), err.end());
}

namespace {

// u = law(t, x, z, xd, ud); z is x when the run has no observer state.
using ControlLaw = std::function<Vector(double, const Vector&, const Vector&,
                                        const Vector&, const Vector&)>;

ControlLaw MakeLaw(const SystemModel& sys, const MetricField& metric,
                   const GainField& gain, const RunConfig& cfg) {
  const int n = sys.n();
  const int m = sys.m();
  if (cfg.controller != ControllerKind::kCustom &&
      (gain.n() != n || gain.m() != m)) {
    throw std::invalid_argument("gain must be m x n for this system");
  }
  switch (cfg.controller) {
    case ControllerKind::kStatic: {
      const Grid grid = cfg.exactness_grid
                            ? *cfg.exactness_grid
                            : Grid::Uniform(sys.domain(), 21);
      auto ctrl = std::make_shared<StaticExactController>(
          gain, grid, cfg.exactness_tol, cfg.quadrature_nodes);
      return [ctrl](double, const Vector& x, const Vector&, const Vector& xd,
                    const Vector& ud) { return ctrl->Control(x, xd, ud); };
    }
    case ControllerKind::kDynExt: {
      if (!(cfg.ell > 0.0)) throw std::invalid_argument("dynext: ell must be > 0");
      auto ctrl =
          std::make_shared<DynExtController>(sys, gain, cfg.quadrature_nodes);
      return [ctrl](double, const Vector& x, const Vector& z, const Vector& xd,
                    const Vector& ud) { return ctrl->Control(x, z, xd, ud); };
    }
    case ControllerKind::kGeodesic: {
      if (metric.role() != MetricRole::kPrimal || metric.n() != n) {
        throw std::invalid_argument(
            "geodesic controller needs a primal metric of dimension n");
      }
      auto ctrl = std::make_shared<PathIntegralController>(
          metric, gain, cfg.geodesic_segments, cfg.geodesic,
          cfg.geodesic_quadrature);
      return [ctrl](double, const Vector& x, const Vector&, const Vector& xd,
                    const Vector& ud) { return ctrl->Control(x, xd, ud); };
    }
    case ControllerKind::kCustom: {
      if (static_cast<int>(cfg.custom.size()) != m) {
        throw std::invalid_argument("custom controller needs m expressions");
      }
      const std::vector<expr::Expr> exprs = cfg.custom;
      return [exprs, n, m](double t, const Vector& x, const Vector& z,
                           const Vector& xd, const Vector& ud) {
        std::vector<double> env;
        env.reserve(static_cast<std::size_t>(1 + 3 * n + m));
        env.push_back(t);
        env.insert(env.end(), x.data(), x.data() + n);
        env.insert(env.end(), xd.data(), xd.data() + n);
        env.insert(env.end(), z.data(), z.data() + n);
        env.insert(env.end(), ud.data(), ud.data() + m);
        Vector u(m);
        for (int i = 0; i < m; ++i) u(i) = exprs[i].Evaluate(env);
        return u;
      };
    }
  }
  throw std::logic_error("unhandled controller kind");
}

}  // namespace

SimTrace RunClosedLoop(const SystemModel& sys, const MetricField& metric,
                       const GainField& gain, const ReferenceSpec& ref,
                       const RunConfig& cfg) {
  if (!(cfg.horizon > 0.0) || !(cfg.h > 0.0)) {
    throw std::invalid_argument("simulation needs T > 0 and h > 0");
  }
  if (cfg.horizon / cfg.h > 1e7) {
    throw std::invalid_argument("simulation needs T/h <= 1e7");
  }
  const int n = sys.n();
  const Vector xd0 = cfg.xd0 ? *cfg.xd0 : ref.xd0;
  if (cfg.x0.size() != n || xd0.size() != n) {
    throw std::invalid_argument("initial states must have dimension n");
  }
  const bool dyn = cfg.controller == ControllerKind::kDynExt;
  const Vector z0 = cfg.z0 ? *cfg.z0 : xd0;
  if (dyn && z0.size() != n) throw std::invalid_argument("z0 must have dimension n");

  ControlLaw law = MakeLaw(sys, metric, gain, cfg);
  const bool hold = cfg.zero_order_hold && (dyn || cfg.controller ==
                                                       ControllerKind::kGeodesic);
  const auto steps = static_cast<long long>(std::llround(cfg.horizon / cfg.h));
  const double h = cfg.horizon / static_cast<double>(steps);
  const int dim = dyn ? 3 * n : 2 * n;

  Vector state(dim);
  state.head(n) = cfg.x0;
  state.segment(n, n) = xd0;
  if (dyn) state.tail(n) = z0;

  auto z_of = [&](const Vector& s) -> Vector {
    return dyn ? Vector(s.tail(n)) : Vector(s.head(n));
  };
  auto control = [&](double t, const Vector& s, const Vector& ud) {
    return law(t, s.head(n), z_of(s), s.segment(n, n), ud);
  };
  // Derivative of the coupled state; `held` replaces the control when set.
  auto field = [&](double t, const Vector& s, const Vector* held) -> Vector {
    const Vector xd = s.segment(n, n);
    const Vector ud = ref.EvalUd(t, xd);
    const Vector u = held != nullptr ? *held : control(t, s, ud);
    Vector d(dim);
    d.head(n) = sys.Dynamics(s.head(n), u);
    d.segment(n, n) = sys.Dynamics(xd, ud);
    if (dyn) d.tail(n) = d.head(n) - cfg.ell * (s.tail(n) - s.head(n));
    if (!d.allFinite()) throw NumericalFailure("non-finite derivative", t);
    return d;
  };

  SimTrace trace;
  trace.controller = cfg.controller;
  auto record = [&](double t, const Vector& s, const Vector& u,
                    const Vector& ud) {
    const Vector x = s.head(n);
    trace.t.push_back(t);
    trace.x.push_back(x);
    trace.xd.push_back(s.segment(n, n));
    if (dyn) trace.z.push_back(s.tail(n));
    trace.u.push_back(u);
    trace.ud.push_back(ud);
    trace.err.push_back((x - s.segment(n, n)).norm());
    if (!sys.domain().Contains(x)) {
      if (trace.domain_violations == 0) trace.first_violation_time = t;
      ++trace.domain_violations;
    }
  };
  auto fail = [&](const std::string& what, double t) {
    trace.failure = what;
    trace.failure_time = t;
  };

  for (long long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * h;
    Vector ud;
    Vector u;
    try {
      ud = ref.EvalUd(t, state.segment(n, n));
      u = control(t, state, ud);
      if (!u.allFinite()) throw NumericalFailure("non-finite control", t);
    } catch (const std::runtime_error& e) {
      fail(e.what(), t);
      break;
    }
    record(t, state, u, ud);
    if (k == steps) break;
    try {
      const Vector* held = hold ? &u : nullptr;
      const Vector k1 = [&] {
        Vector d(dim);
        d.head(n) = sys.Dynamics(state.head(n), u);
        d.segment(n, n) = sys.Dynamics(state.segment(n, n), ud);
        if (dyn) d.tail(n) = d.head(n) - cfg.ell * (state.tail(n) - state.head(n));
        return d;
      }();
      const Vector k2 = field(t + 0.5 * h, state + 0.5 * h * k1, held);
      const Vector k3 = field(t + 0.5 * h, state + 0.5 * h * k2, held);
      const Vector k4 = field(t + h, state + h * k3, held);
      Vector next = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!next.allFinite()) throw NumericalFailure("non-finite state", t + h);
      if (next.head(n).norm() > cfg.divergence_bound ||
          next.segment(n, n).norm() > cfg.divergence_bound) {
        throw NumericalFailure("state diverged", t + h);
      }
      state = std::move(next);
    } catch (const NumericalFailure& e) {
      fail(e.what(), e.time());
      break;
    } catch (const std::runtime_error& e) {
      fail(e.what(), t);
      break;
    }
  }
  return trace;
}

double DecayRate(const std::vector<double>& t, const std::vector<double>& value,
                 double t_a, double t_b) {
  if (t.size() != value.size()) throw std::invalid_argument("DecayRate: size mismatch");
  if (t.empty() || !(t_a < t_b) || t_a < t.front() - 1e-12 ||
      t_b > t.back() + 1e-12) {
    throw std::invalid_argument("DecayRate: window exits the trace");
  }
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_a - 1e-12 || t[i] > t_b + 1e-12) continue;
    if (!(value[i] > 1e-12)) {
      throw std::domain_error("DecayRate: value underflows on the window");
    }
    const double y = -std::log(value[i]);
    st += t[i];
    sy += y;
    stt += t[i] * t[i];
    sty += t[i] * y;
    ++count;
  }
  if (count < 2) throw std::invalid_argument("DecayRate: fewer than 2 samples");
  const double c = static_cast<double>(count);
  const double denom = c * stt - st * st;
  return (c * sty - st * sy) / denom;
}

double DecayRate(const SimTrace& trace, double t_a, double t_b) {
  return DecayRate(trace.t, trace.err, t_a, t_b);
}

std::vector<SweepRow> PerturbationSweep(const SystemModel& sys,
                                        const MetricField& metric,
                                        const GainField& gain,
                                        const ReferenceSpec& ref,
                                        const RunConfig& cfg,
                                        const SweepOptions& opts) {
  for (double r : opts.radii) {
    if (r < 0.0) throw std::invalid_argument("sweep radii must be >= 0");
  }
  if (opts.samples < 1) throw std::invalid_argument("sweep needs >= 1 sample");
  const int n = sys.n();
  const Vector xd0 = cfg.xd0 ? *cfg.xd0 : ref.xd0;
  const std::size_t total = opts.radii.size() * static_cast<std::size_t>(opts.samples);
  std::vector<char> ok(total, 0);

  auto run_one = [&](std::size_t job) {
    const std::size_t ri = job / static_cast<std::size_t>(opts.samples);
    const std::size_t si = job % static_cast<std::size_t>(opts.samples);
    std::seed_seq seq{static_cast<std::uint64_t>(opts.seed),
                      static_cast<std::uint64_t>(ri),
                      static_cast<std::uint64_t>(si)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    Vector dir(n);
    do {
      for (int i = 0; i < n; ++i) dir(i) = normal(rng);
    } while (dir.norm() == 0.0);
    RunConfig c = cfg;
    c.xd0 = xd0;
    c.x0 = xd0 + opts.radii[ri] * dir.normalized();
    try {
      const SimTrace tr = RunClosedLoop(sys, metric, gain, ref, c);
      ok[job] = tr.completed() && tr.final_error() < opts.threshold;
    } catch (const std::runtime_error&) {
      ok[job] = 0;
    }
  };

  std::size_t workers = opts.threads > 0
                            ? static_cast<std::size_t>(opts.threads)
                            : std::max(1u, std::thread::hardware_concurrency());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(total, 1));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t job = next++; job < total; job = next++) run_one(job);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<SweepRow> rows;
  for (std::size_t ri = 0; ri < opts.radii.size(); ++ri) {
    SweepRow row{opts.radii[ri], opts.samples, 0};
    for (int si = 0; si < opts.samples; ++si) {
      row.converged += ok[ri * static_cast<std::size_t>(opts.samples) +
                          static_cast<std::size_t>(si)];
    }
    rows.push_back(row);
  }
  return rows;
}

void WriteTraceCsv(std::ostream& out, const SimTrace& trace) {
  if (trace.t.empty()) {
    out << "t,err\n";
    return;
  }
  const auto n = trace.x.front().size();
  const auto m = trace.u.front().size();
  out << "t";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",xd" << i;
  if (trace.has_z()) {
    for (Eigen::Index i = 1; i <= n; ++i) out << ",z" << i;
  }
  for (Eigen::Index i = 1; i <= m; ++i) out << ",u" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",ud" << i;
  out << ",err\n";
  const auto old_flags = out.flags();
  const auto old_precision = out.precision(17);
  out.unsetf(std::ios::floatfield);
  auto put = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << v(i);
  };
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    out << trace.t[k];
    put(trace.x[k]);
    put(trace.xd[k]);
    if (trace.has_z()) put(trace.z[k]);
    put(trace.u[k]);
    put(trace.ud[k]);
    out << ',' << trace.err[k] << '\n';
  }
  out.precision(old_precision);
  out.flags(old_flags);
}

}  // namespace ccmtrack
