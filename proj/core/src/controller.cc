#include "ccmtrack/controller.h"

#include <cmath>
#include <stdexcept>

#include "ccmtrack/certificates.h"

namespace ccmtrack {

double Lambda0(double r, double lambda, double p_lo) {
  return std::min(lambda - 1.0 / (2.0 * r), 2.0 / p_lo);
}

SynthesisError::SynthesisError(const std::string& what, Vector witness)
    : std::runtime_error(what), witness_(std::move(witness)) {}

struct GainField::Impl {
  Kind kind;
  int m;
  int n;
  bool constant;
  // Expression kind.
  std::vector<std::vector<expr::Expr>> entries;
  // partials[k][row][col] = d entries[row][col] / d x_k
  std::vector<std::vector<std::vector<expr::Expr>>> partials;
  // Synthesized kind.
  std::optional<SystemModel> sys;
  std::optional<MetricField> metric;
  DampingParams params;
  double r{0.0};
};

GainField::GainField(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

GainField GainField::FromExpressions(std::vector<std::vector<expr::Expr>> entries,
                                     int n) {
  if (entries.empty() || n < 1) {
    throw std::invalid_argument("GainField: gain must be m x n with m, n >= 1");
  }
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::kExpression;
  impl->m = static_cast<int>(entries.size());
  impl->n = n;
  impl->constant = true;
  for (const auto& row : entries) {
    if (static_cast<int>(row.size()) != n) {
      throw std::invalid_argument("GainField: every gain row needs n entries");
    }
    for (const auto& e : row) impl->constant = impl->constant && e.is_constant();
  }
  impl->partials.assign(n, {});
  for (int k = 0; k < n; ++k) {
    impl->partials[k].resize(impl->m);
    for (int r = 0; r < impl->m; ++r) {
      for (int c = 0; c < n; ++c) {
        impl->partials[k][r].push_back(expr::Differentiate(entries[r][c], k));
      }
    }
  }
  impl->entries = std::move(entries);
  return GainField(std::move(impl));
}

GainField GainField::FromStrings(const std::vector<std::vector<std::string>>& rows,
                                 int n) {
  const expr::VarTable vars = SystemModel::StateVars(n);
  std::vector<std::vector<expr::Expr>> entries;
  for (const auto& row : rows) {
    auto& out = entries.emplace_back();
    for (const auto& text : row) out.push_back(expr::Parse(text, vars));
  }
  return FromExpressions(std::move(entries), n);
}

GainField GainField::Constant(const Matrix& k) {
  std::vector<std::vector<expr::Expr>> entries(k.rows());
  for (Eigen::Index r = 0; r < k.rows(); ++r) {
    for (Eigen::Index c = 0; c < k.cols(); ++c) {
      entries[r].push_back(expr::Expr::Constant(k(r, c)));
    }
  }
  return FromExpressions(std::move(entries), static_cast<int>(k.cols()));
}

GainField GainField::Synthesized(const SystemModel& sys,
                                 const MetricField& metric,
                                 const DampingParams& params) {
  if (metric.role() != MetricRole::kPrimal) {
    throw MetricBoundError("gain synthesis requires a primal metric");
  }
  if (metric.n() != sys.n()) {
    throw std::invalid_argument("GainField: metric and system dimensions differ");
  }
  if (params.gamma0 < 0.0) {
    throw std::invalid_argument("GainField: gamma0 must be nonnegative");
  }
  if (params.gamma_const && *params.gamma_const < 0.0) {
    throw std::invalid_argument("GainField: constant gamma must be nonnegative");
  }
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::kSynthesized;
  impl->m = sys.m();
  impl->n = sys.n();
  impl->params = params;
  impl->r = params.r;
  if (!params.gamma_const) {
    if (!(params.r > 0.0)) {
      if (!(metric.lambda() > 0.0)) {
        throw std::invalid_argument("GainField: r = 1/lambda needs lambda > 0");
      }
      impl->r = 1.0 / metric.lambda();
    }
    if (!(2.0 * impl->r * metric.lambda() > 1.0)) {
      throw std::invalid_argument("GainField: r must exceed 1/(2 lambda)");
    }
  }
  impl->constant = params.gamma_const.has_value() && metric.is_constant() &&
                   sys.has_constant_b();
  impl->sys.emplace(sys);
  impl->metric.emplace(metric);
  return GainField(std::move(impl));
}

GainField::Kind GainField::kind() const { return impl_->kind; }
int GainField::m() const { return impl_->m; }
int GainField::n() const { return impl_->n; }
bool GainField::is_constant() const { return impl_->constant; }

const std::vector<std::vector<expr::Expr>>& GainField::entries() const {
  if (impl_->kind != Kind::kExpression) {
    throw std::logic_error("GainField: entries() needs an expression gain");
  }
  return impl_->entries;
}

const DampingParams& GainField::params() const {
  if (impl_->kind != Kind::kSynthesized) {
    throw std::logic_error("GainField: params() needs a synthesized gain");
  }
  return impl_->params;
}

bool GainField::degenerate() const {
  return impl_->kind == Kind::kSynthesized && impl_->params.gamma0 == 0.0 &&
         impl_->params.gamma_const && *impl_->params.gamma_const == 0.0;
}

double GainField::Gamma(const Vector& x) const {
  const DampingParams& p = params();
  if (p.gamma_const) return *p.gamma_const;
  const double ups = Upsilon(*impl_->sys, *impl_->metric, x);
  return impl_->r / impl_->metric->p_lo() * ups * ups;
}

Matrix GainField::Direction(const Vector& x) const {
  params();
  const Matrix p = impl_->metric->Eval(x) * impl_->sys->EvalB(x);
  try {
    return -Inverse(p.transpose() * p) * p.transpose();
  } catch (const SingularMatrixError&) {
    throw SynthesisError("damping matrix [(MB)^T MB]^{-1} is singular", x);
  }
}

Matrix GainField::Eval(const Vector& x) const {
  if (x.size() != impl_->n) {
    throw std::invalid_argument("GainField: state has wrong dimension");
  }
  if (impl_->kind == Kind::kSynthesized) {
    return (Gamma(x) + impl_->params.gamma0) * Direction(x);
  }
  Matrix k(impl_->m, impl_->n);
  const std::span<const double> env(x.data(), x.size());
  for (int r = 0; r < impl_->m; ++r) {
    for (int c = 0; c < impl_->n; ++c) k(r, c) = impl_->entries[r][c].Evaluate(env);
  }
  return k;
}

Matrix GainField::Partial(const Vector& x, int k) const {
  if (k < 0 || k >= impl_->n) throw std::out_of_range("GainField: axis index");
  if (impl_->kind == Kind::kExpression) {
    Matrix d(impl_->m, impl_->n);
    const std::span<const double> env(x.data(), x.size());
    for (int r = 0; r < impl_->m; ++r) {
      for (int c = 0; c < impl_->n; ++c) {
        d(r, c) = impl_->partials[k][r][c].Evaluate(env);
      }
    }
    return d;
  }
  const double step = 1e-6 * std::max(1.0, std::abs(x(k)));
  Vector xp = x;
  Vector xm = x;
  xp(k) += step;
  xm(k) -= step;
  return (Eval(xp) - Eval(xm)) / (2.0 * step);
}

double Upsilon(const SystemModel& sys, const MetricField& metric,
               const Vector& x) {
  return SpectralNorm(ContractionForm(sys, metric, x));
}

GainField SynthesizeGain(const SystemModel& sys, const MetricField& metric,
                         const DampingParams& params, const Grid& grid) {
  GainField gain = GainField::Synthesized(sys, metric, params);
  for (std::size_t i = 0; i < grid.size(); ++i) gain.Direction(grid.Point(i));
  return gain;
}

ExactnessReport ExactnessResidual(const GainField& gain, const Grid& grid,
                                  int threads) {
  const int n = gain.n();
  const int m = gain.m();
  std::vector<ExactnessReport> at(grid.size());
  auto residual = [&](const Vector& x) -> PointMargin {
    std::vector<Matrix> d(n);
    for (int k = 0; k < n; ++k) d[k] = gain.Partial(x, k);
    double worst = 0.0;
    Vector where(3);
    where << 0, 0, 1;
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double v = std::abs(d[j](r, i) - d[i](r, j));
          if (v > worst) {
            worst = v;
            where << r, i, j;
          }
        }
      }
    }
    return {worst, where};
  };
  const GridScan scan = ScanGrid(grid, residual, threads);
  ExactnessReport report;
  report.residual = scan.values[scan.worst_index];
  report.witness = grid.Point(scan.worst_index);
  if (scan.worst_direction.size() == 3) {
    report.row = static_cast<int>(scan.worst_direction(0));
    report.axis_i = static_cast<int>(scan.worst_direction(1));
    report.axis_j = static_cast<int>(scan.worst_direction(2));
  }
  return report;
}

Vector RadialPotential(const GainField& gain, const Vector& x, int nodes) {
  const QuadratureRule& rule = GaussLegendre(nodes);
  Vector beta = Vector::Zero(gain.m());
  for (int q = 0; q < nodes; ++q) {
    const double s = 0.5 * (rule.nodes[q] + 1.0);
    beta += 0.5 * rule.weights[q] * (gain.Eval(s * x) * x);
  }
  return beta;
}

Vector AxisPathPotential(const GainField& gain, const Vector& x, int nodes) {
  const QuadratureRule& rule = GaussLegendre(nodes);
  Vector beta = Vector::Zero(gain.m());
  Vector base = Vector::Zero(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (int q = 0; q < nodes; ++q) {
      Vector p = base;
      p(i) = 0.5 * (rule.nodes[q] + 1.0) * x(i);
      beta += 0.5 * rule.weights[q] * x(i) * gain.Eval(p).col(i);
    }
    base(i) = x(i);
  }
  return beta;
}

StaticExactController::StaticExactController(GainField gain,
                                             const Grid& check_grid, double tol,
                                             int nodes)
    : gain_(std::move(gain)), nodes_(nodes), residual_(0.0) {
  const ExactnessReport report = ExactnessResidual(gain_, check_grid);
  residual_ = report.residual;
  if (residual_ > tol) {
    throw ExactnessError(
        "gain is not exact (integrability residual " +
        std::to_string(residual_) +
        "); the static controller needs an exact gain, use the dynext "
        "controller instead");
  }
}

Vector StaticExactController::Control(const Vector& x, const Vector& xd,
                                      const Vector& ud) const {
  if (x == xd) return ud;
  return ud + RadialPotential(gain_, x, nodes_) - RadialPotential(gain_, xd, nodes_);
}

Vector DynExtBeta(const GainField& gain, const Vector& x, const Vector& z,
                  int nodes) {
  if (x.size() != gain.n() || z.size() != gain.n()) {
    throw std::invalid_argument("DynExtBeta: x and z must have dimension n");
  }
  const QuadratureRule& rule = GaussLegendre(nodes);
  Vector beta = Vector::Zero(gain.m());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) == 0.0) continue;
    Vector p = z;
    for (int q = 0; q < nodes; ++q) {
      p(i) = 0.5 * (rule.nodes[q] + 1.0) * x(i);
      beta += 0.5 * rule.weights[q] * x(i) * gain.Eval(p).col(i);
    }
  }
  return beta;
}

DynExtController::DynExtController(const SystemModel& sys, GainField gain,
                                   int nodes)
    : sys_(sys), gain_(std::move(gain)), nodes_(nodes) {
  if (gain_.n() != sys.n() || gain_.m() != sys.m()) {
    throw std::invalid_argument("DynExtController: gain must be m x n");
  }
}

Vector DynExtController::Control(const Vector& x, const Vector& z,
                                 const Vector& xd, const Vector& ud) const {
  if (x == xd) return ud;
  return ud + DynExtBeta(gain_, x, z, nodes_) - DynExtBeta(gain_, xd, z, nodes_);
}

Vector DynExtController::ZDot(const Vector& x, const Vector& z, const Vector& u,
                              double ell) const {
  return sys_.Dynamics(x, u) - ell * (z - x);
}

Vector DynExtControllerStep(const SystemModel& sys, const GainField& gain,
                            DynExtState& state, const Vector& x,
                            const Vector& xd, const Vector& ud, double h,
                            double t) {
  if (!(state.ell > 0.0)) throw std::invalid_argument("dynext: ell must be > 0");
  const DynExtController ctrl(sys, gain);
  const Vector u = ctrl.Control(x, state.z, xd, ud);
  const Vector drive = sys.Dynamics(x, u);
  state.z = Rk4Step(
      [&](double, const Vector& z) -> Vector { return drive - state.ell * (z - x); },
      state.z, t, h);
  if (!state.z.allFinite()) throw NumericalFailure("dynext state diverged", t + h);
  return u;
}

}  // namespace ccmtrack
