#include "ccmtrack/model.h"

#include <utility>

namespace ccmtrack {

namespace {

std::span<const double> Env(const Vector& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

// Corners of the box plus its center.
std::vector<Vector> SamplePoints(const Box& box) {
  const int n = box.dim();
  std::vector<Vector> points{box.Center()};
  if (n > 12) return points;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Vector p(n);
    for (int i = 0; i < n; ++i) p(i) = (mask >> i) & 1 ? box.hi(i) : box.lo(i);
    points.push_back(p);
  }
  return points;
}

}  // namespace

bool Box::Contains(const Vector& x, double slack) const {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) < lo(i) - slack || x(i) > hi(i) + slack) return false;
  }
  return true;
}

SystemModel::SystemModel(std::vector<expr::Expr> f,
                         std::vector<std::vector<expr::Expr>> b, Box domain,
                         std::string name)
    : n_(static_cast<int>(f.size())),
      m_(b.empty() ? 0 : static_cast<int>(b.front().size())),
      name_(std::move(name)),
      domain_(std::move(domain)),
      vars_(StateVars(static_cast<int>(f.size()))),
      f_(std::move(f)),
      b_(std::move(b)) {
  if (n_ == 0) throw ModelError("system has no states");
  if (static_cast<int>(b_.size()) != n_) {
    throw ModelError("B must have n = " + std::to_string(n_) + " rows");
  }
  for (const auto& row : b_) {
    if (static_cast<int>(row.size()) != m_) {
      throw ModelError("B rows have inconsistent lengths");
    }
  }
  if (m_ < 1 || m_ >= n_) throw ModelError("input dimension must satisfy 0 < m < n");
  if (domain_.dim() != n_ || domain_.hi.size() != n_) {
    throw ModelError("domain box dimension does not match n");
  }
  for (int i = 0; i < n_; ++i) {
    if (!(domain_.lo(i) < domain_.hi(i))) {
      throw ModelError("domain box is empty along axis " + std::to_string(i + 1));
    }
  }

  jac_f_.assign(n_, std::vector<expr::Expr>(n_));
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) jac_f_[i][j] = expr::Differentiate(f_[i], j);
  }
  jac_b_.assign(m_, std::vector<std::vector<expr::Expr>>(
                        n_, std::vector<expr::Expr>(n_)));
  for (int c = 0; c < m_; ++c) {
    for (int i = 0; i < n_; ++i) {
      if (!b_[i][c].is_constant()) constant_b_ = false;
      for (int j = 0; j < n_; ++j) {
        jac_b_[c][i][j] = expr::Differentiate(b_[i][c], j);
      }
    }
  }

  for (const Vector& x : SamplePoints(domain_)) {
    const Vector fx = EvalF(x);
    const Matrix bx = EvalB(x);
    if (!fx.allFinite() || !bx.allFinite()) {
      throw ModelError("f or B is not finite on the domain");
    }
    Eigen::JacobiSVD<Matrix> svd(bx);
    if (svd.singularValues().minCoeff() <= 1e-8) {
      throw ModelError("B(x) loses column rank on the domain");
    }
  }
}

SystemModel SystemModel::FromStrings(
    const std::vector<std::string>& f,
    const std::vector<std::vector<std::string>>& b, Box domain,
    std::string name) {
  const int n = static_cast<int>(f.size());
  const expr::VarTable vars = StateVars(n);
  std::vector<expr::Expr> fe;
  for (const auto& s : f) fe.push_back(expr::Parse(s, vars));
  std::vector<std::vector<expr::Expr>> be;
  for (const auto& row : b) {
    std::vector<expr::Expr> r;
    for (const auto& s : row) r.push_back(expr::Parse(s, vars));
    be.push_back(std::move(r));
  }
  return SystemModel(std::move(fe), std::move(be), std::move(domain),
                     std::move(name));
}

void SystemModel::CheckDimensions(const Vector& x) const {
  if (x.size() != n_) {
    throw std::invalid_argument("state dimension " + std::to_string(x.size()) +
                                " != n = " + std::to_string(n_));
  }
}

Vector SystemModel::EvalF(const Vector& x) const {
  CheckDimensions(x);
  Vector out(n_);
  for (int i = 0; i < n_; ++i) out(i) = f_[i].Evaluate(Env(x));
  return out;
}

Matrix SystemModel::EvalB(const Vector& x) const {
  CheckDimensions(x);
  Matrix out(n_, m_);
  for (int i = 0; i < n_; ++i) {
    for (int c = 0; c < m_; ++c) out(i, c) = b_[i][c].Evaluate(Env(x));
  }
  return out;
}

Vector SystemModel::Dynamics(const Vector& x, const Vector& u) const {
  return EvalF(x) + EvalB(x) * u;
}

Matrix SystemModel::JacF(const Vector& x) const {
  CheckDimensions(x);
  Matrix out(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) out(i, j) = jac_f_[i][j].Evaluate(Env(x));
  }
  return out;
}

Matrix SystemModel::JacBColumn(const Vector& x, int column) const {
  CheckDimensions(x);
  Matrix out(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      out(i, j) = jac_b_.at(column)[i][j].Evaluate(Env(x));
    }
  }
  return out;
}

Matrix SystemModel::AMatrix(const Vector& x, const Vector& u) const {
  if (u.size() != m_) throw std::invalid_argument("input dimension mismatch");
  Matrix a = JacF(x);
  if (constant_b_) return a;
  for (int c = 0; c < m_; ++c) a += u(c) * JacBColumn(x, c);
  return a;
}

const char* ToString(MetricRole role) {
  return role == MetricRole::kPrimal ? "primal" : "dual";
}

MetricField::MetricField(std::vector<std::vector<expr::Expr>> entries,
                         double p_lo, double p_hi, double lambda,
                         MetricRole role)
    : n_(static_cast<int>(entries.size())),
      entries_(std::move(entries)),
      p_lo_(p_lo),
      p_hi_(p_hi),
      lambda_(lambda),
      role_(role) {
  for (const auto& row : entries_) {
    if (static_cast<int>(row.size()) != n_) {
      throw ModelError("metric must be square");
    }
  }
  if (!(p_lo_ > 0.0) || !(p_hi_ >= p_lo_)) {
    throw ModelError("metric bounds must satisfy 0 < p_lo <= p_hi");
  }
  if (lambda_ < 0.0) throw ModelError("metric rate lambda must be >= 0");
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < i; ++j) entries_[i][j] = entries_[j][i];
  }
  partials_.assign(n_, std::vector<std::vector<expr::Expr>>(
                           n_, std::vector<expr::Expr>(n_)));
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (!entries_[i][j].is_constant()) constant_ = false;
      for (int k = 0; k < n_; ++k) {
        partials_[k][i][j] = expr::Differentiate(entries_[i][j], k);
      }
    }
  }
  if (constant_) {
    constant_value_ = Matrix(n_, n_);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        constant_value_(i, j) =
            entries_[i][j].Evaluate(std::span<const double>());
      }
    }
  }
}

MetricField MetricField::Constant(const Matrix& value, double p_lo,
                                  double p_hi, double lambda,
                                  MetricRole role) {
  RequireSymmetric(value);
  const int n = static_cast<int>(value.rows());
  std::vector<std::vector<expr::Expr>> entries(n, std::vector<expr::Expr>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) entries[i][j] = expr::Expr::Constant(value(i, j));
  }
  return MetricField(std::move(entries), p_lo, p_hi, lambda, role);
}

MetricField MetricField::Constant(const Matrix& value, double lambda,
                                  MetricRole role) {
  const EigenDecomposition eig = SymEig(value);
  return Constant(value, eig.values(0), eig.values(eig.values.size() - 1),
                  lambda, role);
}

Matrix MetricField::Eval(const Vector& x) const {
  if (constant_) return constant_value_;
  Matrix out(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = i; j < n_; ++j) {
      out(i, j) = entries_[i][j].Evaluate(Env(x));
      out(j, i) = out(i, j);
    }
  }
  return out;
}

Matrix MetricField::Partial(const Vector& x, int k) const {
  if (constant_) return Matrix::Zero(n_, n_);
  Matrix out(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = i; j < n_; ++j) {
      out(i, j) = partials_.at(k)[i][j].Evaluate(Env(x));
      out(j, i) = out(i, j);
    }
  }
  return out;
}

Matrix MetricField::DirDeriv(const Vector& x, const Vector& v) const {
  Matrix out = Matrix::Zero(n_, n_);
  if (constant_) return out;
  for (int k = 0; k < n_; ++k) {
    if (v(k) != 0.0) out += v(k) * Partial(x, k);
  }
  return out;
}

MetricField MetricField::InverseOfConstant() const {
  if (!constant_) {
    throw ModelError("inverse is only available for constant metrics");
  }
  const MetricRole flipped =
      role_ == MetricRole::kPrimal ? MetricRole::kDual : MetricRole::kPrimal;
  return Constant(Sym(Inverse(constant_value_)), 1.0 / p_hi_, 1.0 / p_lo_,
                  lambda_, flipped);
}

MetricField MetricField::WithRole(MetricRole role) const {
  MetricField copy = *this;
  copy.role_ = role;
  return copy;
}

MetricField MetricField::WithLambda(double lambda) const {
  if (lambda < 0.0) throw ModelError("metric rate lambda must be >= 0");
  MetricField copy = *this;
  copy.lambda_ = lambda;
  return copy;
}

expr::VarTable ReferenceSpec::RefVars(int n) {
  return expr::VarTable({"t"}).Concat(expr::VarTable::Indexed("xd", n));
}

ReferenceSpec ReferenceSpec::FromStrings(const Vector& xd0,
                                         const std::vector<std::string>& ud) {
  const expr::VarTable vars = RefVars(static_cast<int>(xd0.size()));
  ReferenceSpec spec{xd0, {}};
  for (const auto& s : ud) spec.ud.push_back(expr::Parse(s, vars));
  return spec;
}

Vector ReferenceSpec::EvalUd(double t, const Vector& xd) const {
  std::vector<double> env(1 + xd.size());
  env[0] = t;
  for (Eigen::Index i = 0; i < xd.size(); ++i) env[1 + i] = xd(i);
  Vector out(ud.size());
  for (std::size_t k = 0; k < ud.size(); ++k) out(k) = ud[k].Evaluate(env);
  return out;
}

ReferenceTrace GenerateReference(const SystemModel& sys,
                                 const ReferenceSpec& ref, double horizon,
                                 double h) {
  if (!(horizon > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("GenerateReference: T and h must be positive");
  }
  if (ref.xd0.size() != sys.n() || static_cast<int>(ref.ud.size()) != sys.m()) {
    throw std::invalid_argument("reference dimensions do not match the system");
  }
  const auto steps = static_cast<long>(std::llround(horizon / h));
  ReferenceTrace trace;
  auto record = [&](double t, const Vector& xd) {
    trace.t.push_back(t);
    trace.xd.push_back(xd);
    trace.ud.push_back(ref.EvalUd(t, xd));
    if (!sys.domain().Contains(xd)) {
      if (trace.domain_violations == 0) trace.first_violation_time = t;
      ++trace.domain_violations;
    }
  };
  auto field = [&](double t, const Vector& xd) {
    return sys.Dynamics(xd, ref.EvalUd(t, xd));
  };

  Vector xd = ref.xd0;
  record(0.0, xd);
  try {
    for (long k = 0; k < steps; ++k) {
      const double t = k * h;
      xd = Rk4Step(field, xd, t, h);
      if (!xd.allFinite() || xd.norm() > 1e9) {
        throw NumericalFailure("reference diverged (||x_d|| > 1e9)", t + h);
      }
      record((k + 1) * h, xd);
    }
  } catch (const NumericalFailure& e) {
    trace.failure = e.what();
    trace.failure_time = e.time();
  } catch (const expr::DomainError& e) {
    trace.failure = e.what();
    trace.failure_time = trace.t.back();
  }
  return trace;
}

}  // namespace ccmtrack
