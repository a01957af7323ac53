#include "ccmtrack/certificates.h"

#include <cmath>
#include <limits>

namespace ccmtrack {

namespace {

void RequireRole(const MetricField& metric, MetricRole role, const char* check) {
  if (metric.role() != role) {
    throw MetricBoundError(std::string(check) + " requires a " + ToString(role) +
                           " metric, got " + ToString(metric.role()));
  }
}

double NullTol(const Matrix& a) { return 1e-10 * std::max(1.0, MaxAbs(a)); }

template <typename Violates>
CertificateReport Summarize(std::string condition, const Grid& grid,
                            const GridScan& scan, double tol,
                            Violates&& violates) {
  CertificateReport r;
  r.condition = std::move(condition);
  r.tolerance = tol;
  r.worst_margin = scan.values[scan.worst_index];
  r.witness_state = grid.Point(scan.worst_index);
  r.witness_direction = scan.worst_direction;
  MarginStats& s = r.stats;
  s.points = scan.values.size();
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double v : scan.values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
    if (violates(v)) ++s.violations;
  }
  s.mean = sum / static_cast<double>(s.points);
  return r;
}

}  // namespace

std::optional<double> CertificateReport::Extra(const std::string& key) const {
  for (const auto& [k, v] : extras) {
    if (k == key) return v;
  }
  return std::nullopt;
}

CertificateReport CheckKillingPde(const SystemModel& sys,
                                  const MetricField& metric, const Grid& grid,
                                  const CheckOptions& opts) {
  RequireRole(metric, MetricRole::kPrimal, "killing");
  auto residual = [&](const Vector& x) -> PointMargin {
    const Matrix m = metric.Eval(x);
    const Matrix b = sys.EvalB(x);
    double worst = 0.0;
    for (int c = 0; c < sys.m(); ++c) {
      const Matrix db = sys.JacBColumn(x, c);
      const Matrix r =
          metric.DirDeriv(x, b.col(c)) + db.transpose() * m + m * db;
      worst = std::max(worst, MaxAbs(r));
    }
    return {worst, Vector()};
  };
  const GridScan scan = ScanGrid(grid, residual, opts.threads);
  CertificateReport r = Summarize("killing", grid, scan, opts.tol,
                                  [&](double v) { return v > opts.tol; });
  r.pass = r.worst_margin <= opts.tol;
  return r;
}

Matrix ContractionForm(const SystemModel& sys, const MetricField& metric,
                       const Vector& x) {
  const Matrix m = metric.Eval(x);
  const Matrix j = sys.JacF(x);
  return Sym(metric.DirDeriv(x, sys.EvalF(x)) + m * j + j.transpose() * m);
}

PointMargin C1MarginAt(const SystemModel& sys, const MetricField& metric,
                       const Vector& x) {
  const Matrix m = metric.Eval(x);
  const Matrix p = m * sys.EvalB(x);
  const Matrix n = NullSpaceBasis(p.transpose(), NullTol(p));
  if (n.cols() == 0) return {-std::numeric_limits<double>::infinity(), Vector()};
  const Matrix q = ContractionForm(sys, metric, x);
  const Matrix reduced_q = Sym(n.transpose() * q * n);
  const Matrix reduced_m = Sym(n.transpose() * m * n);
  EigenDecomposition eig;
  try {
    eig = GeneralizedSymEig(reduced_q, reduced_m);
  } catch (const NotPositiveDefiniteError&) {
    throw MetricBoundError("N^T M N is not positive definite");
  }
  const Eigen::Index last = eig.values.size() - 1;
  Vector v = n * eig.vectors.col(last);
  v.normalize();
  return {eig.values(last), v};
}

CertificateReport CheckC1(const SystemModel& sys, const MetricField& metric,
                          const Grid& grid, const CheckOptions& opts) {
  RequireRole(metric, MetricRole::kPrimal, "c1");
  if (!(metric.p_lo() > 0.0)) throw MetricBoundError("c1 requires p_lo > 0");
  const GridScan scan = ScanGrid(
      grid, [&](const Vector& x) { return C1MarginAt(sys, metric, x); },
      opts.threads);
  const double lambda = metric.lambda();
  const bool exponential = lambda > 0.0;
  auto violates = [&](double v) {
    return exponential ? v > -lambda + opts.tol : v >= -opts.tol;
  };
  CertificateReport r = Summarize("c1", grid, scan, opts.tol, violates);
  r.pass = !violates(r.worst_margin);
  r.extras.emplace_back("certified_rate", -r.worst_margin);
  r.extras.emplace_back("claimed_rate", lambda);
  return r;
}

CertificateReport CheckDualW(const SystemModel& sys, const MetricField& dual,
                             const Grid& grid, const CheckOptions& opts) {
  RequireRole(dual, MetricRole::kDual, "dual-w");
  auto contraction = [&](const Vector& x) -> PointMargin {
    const Matrix w = dual.Eval(x);
    const Matrix b = sys.EvalB(x);
    const Matrix perp = NullSpaceBasis(b.transpose(), NullTol(b));
    const Matrix j = sys.JacF(x);
    const Matrix s = dual.DirDeriv(x, sys.EvalF(x)) + j * w + w * j.transpose();
    const EigenDecomposition eig = SymEig(Sym(perp.transpose() * s * perp));
    const Eigen::Index last = eig.values.size() - 1;
    Vector v = perp * eig.vectors.col(last);
    v.normalize();
    return {eig.values(last), v};
  };
  auto killing = [&](const Vector& x) -> PointMargin {
    const Matrix w = dual.Eval(x);
    const Matrix b = sys.EvalB(x);
    double worst = 0.0;
    for (int c = 0; c < sys.m(); ++c) {
      const Matrix db = sys.JacBColumn(x, c);
      const Matrix r = dual.DirDeriv(x, b.col(c)) - db * w - w * db.transpose();
      worst = std::max(worst, MaxAbs(r));
    }
    return {worst, Vector()};
  };
  const GridScan scan = ScanGrid(grid, contraction, opts.threads);
  const GridScan kscan = ScanGrid(grid, killing, opts.threads);
  CertificateReport r = Summarize("dual-w", grid, scan, opts.tol,
                                  [&](double v) { return v >= -opts.tol; });
  const double killing_residual = kscan.values[kscan.worst_index];
  r.pass = r.worst_margin < -opts.tol && killing_residual <= opts.tol;
  r.extras.emplace_back("killing_residual", killing_residual);
  return r;
}

CertificateReport CheckRobust(const SystemModel& sys, const MetricField& metric,
                              const Grid& grid, double lambda, double gamma0,
                              RobustLambdaForm form, const CheckOptions& opts) {
  RequireRole(metric, MetricRole::kPrimal, "robust");
  if (lambda < 0.0 || !(gamma0 > 0.0)) {
    throw std::invalid_argument("robust check requires lambda >= 0, gamma0 > 0");
  }
  const int n = sys.n();
  auto margin = [&](const Vector& x) -> PointMargin {
    const Matrix m = metric.Eval(x);
    const Matrix p = m * sys.EvalB(x);
    const Matrix null = NullSpaceBasis(p.transpose(), NullTol(p));
    const Eigen::Index k = null.cols();
    Matrix top_left = ContractionForm(sys, metric, x);
    if (form == RobustLambdaForm::kIdentity) {
      top_left += lambda * Matrix::Identity(n, n);
    } else {
      top_left += lambda * m;
    }
    Matrix s(2 * n, 2 * n);
    s << top_left, m, m, -gamma0 * Matrix::Identity(n, n);
    Matrix basis = Matrix::Zero(2 * n, k + n);
    basis.topLeftCorner(n, k) = null;
    basis.bottomRightCorner(n, n) = Matrix::Identity(n, n);
    const EigenDecomposition eig = SymEig(Sym(basis.transpose() * s * basis));
    const Eigen::Index last = eig.values.size() - 1;
    Vector v = basis * eig.vectors.col(last);
    v.normalize();
    return {eig.values(last), v};
  };
  const GridScan scan = ScanGrid(grid, margin, opts.threads);
  CertificateReport r = Summarize("robust", grid, scan, opts.tol,
                                  [&](double v) { return v >= -opts.tol; });
  r.pass = r.worst_margin < -opts.tol;
  r.extras.emplace_back("lambda", lambda);
  r.extras.emplace_back("gamma0", gamma0);
  return r;
}

std::optional<double> RobustGamma0Min(const SystemModel& sys,
                                      const MetricField& metric,
                                      const Grid& grid, double lambda,
                                      RobustLambdaForm form,
                                      const CheckOptions& opts, double lo,
                                      double hi, double rel_tol) {
  auto passes = [&](double g) {
    return CheckRobust(sys, metric, grid, lambda, g, form, opts).pass;
  };
  if (!passes(hi)) return std::nullopt;
  if (passes(lo)) return lo;
  while (hi / lo - 1.0 > rel_tol) {
    const double mid = std::sqrt(lo * hi);
    if (mid <= lo || mid >= hi) break;
    if (passes(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

CertificateReport CheckMetricBounds(const MetricField& metric, const Grid& grid,
                                    const CheckOptions& opts) {
  constexpr double kSlack = 1e-9;
  auto excess = [&](const Vector& x) -> PointMargin {
    const EigenDecomposition eig = SymEig(metric.Eval(x));
    const double low = metric.p_lo() - eig.values(0);
    const double high = eig.values(eig.values.size() - 1) - metric.p_hi();
    return low >= high ? PointMargin{low, eig.vectors.col(0)}
                       : PointMargin{high, eig.vectors.col(eig.values.size() - 1)};
  };
  const GridScan scan = ScanGrid(grid, excess, opts.threads);
  CertificateReport r = Summarize("metric-bounds", grid, scan, kSlack,
                                  [](double v) { return v > kSlack; });
  r.pass = r.worst_margin <= kSlack;
  r.extras.emplace_back("p_lo", metric.p_lo());
  r.extras.emplace_back("p_hi", metric.p_hi());
  return r;
}

DualFlowTrace DualFlowDiagnostic(const SystemModel& sys,
                                 const MetricField& metric,
                                 const std::vector<double>& times,
                                 const std::vector<Vector>& states,
                                 const Vector& p0, DualFlowForm form) {
  if (times.size() != states.size() || times.size() < 2) {
    throw std::invalid_argument("DualFlowDiagnostic: trace/step mismatch");
  }
  if (!p0.allFinite() || p0.size() != sys.n()) {
    throw std::invalid_argument("DualFlowDiagnostic: p0 must be finite, size n");
  }
  const double h = times[1] - times[0];
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::abs((times[k] - times[k - 1]) - h) > 1e-9 * std::max(1.0, h)) {
      throw std::invalid_argument(
          "DualFlowDiagnostic: trace time grid is not uniform");
    }
  }
  auto generator = [&](const Vector& x) -> Matrix {
    const Matrix j = sys.JacF(x);
    return form == DualFlowForm::kTransposed ? Matrix(j.transpose()) : j;
  };

  DualFlowTrace out;
  auto record = [&](double t, const Vector& x, const Vector& p) {
    const Matrix m = metric.Eval(x);
    out.t.push_back(t);
    out.p.push_back(p);
    out.energy.push_back(p.dot(m * p));
    out.output.push_back((m * sys.EvalB(x)).transpose() * p);
  };

  Vector p = p0;
  record(times[0], states[0], p);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const Matrix g0 = generator(states[k]);
    const Matrix gm = generator(0.5 * (states[k] + states[k + 1]));
    const Matrix g1 = generator(states[k + 1]);
    const Vector k1 = g0 * p;
    const Vector k2 = gm * (p + 0.5 * h * k1);
    const Vector k3 = gm * (p + 0.5 * h * k2);
    const Vector k4 = g1 * (p + h * k3);
    p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!p.allFinite()) throw NumericalFailure("dual flow diverged", times[k + 1]);
    record(times[k + 1], states[k + 1], p);
  }
  return out;
}

}  // namespace ccmtrack
