#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccmtrack/expr.h"
#include "ccmtrack/numerics.h"

namespace ccmtrack {

/// Axis-aligned state box. Serves as the forward-invariant set on which
/// certificates are checked and the physical range monitored in simulation.
struct Box {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool Contains(const Vector& x, double slack = 0.0) const;
  Vector Center() const { return 0.5 * (lo + hi); }
};

/// Raised when a model definition is inconsistent (dimensions, rank loss,
/// non-finite evaluation on the domain).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Control-affine plant dx/dt = f(x) + B(x) u with symbolic f and B over the
/// variables x1..xn. Jacobians are differentiated once at construction.
class SystemModel {
 public:
  /// `f` has n entries; `b` is n rows of m entries. All expressions must be
  /// parsed against StateVars(n).
  SystemModel(std::vector<expr::Expr> f,
              std::vector<std::vector<expr::Expr>> b, Box domain,
              std::string name = {});

  /// Parses f and B entries from text.
  static SystemModel FromStrings(const std::vector<std::string>& f,
                                 const std::vector<std::vector<std::string>>& b,
                                 Box domain, std::string name = {});

  static expr::VarTable StateVars(int n) {
    return expr::VarTable::Indexed("x", n);
  }

  int n() const { return n_; }
  int m() const { return m_; }
  const std::string& name() const { return name_; }
  const Box& domain() const { return domain_; }
  const expr::VarTable& vars() const { return vars_; }
  const std::vector<expr::Expr>& f_exprs() const { return f_; }
  const expr::Expr& b_expr(int row, int col) const { return b_[row][col]; }

  Vector EvalF(const Vector& x) const;
  Matrix EvalB(const Vector& x) const;
  /// f(x) + B(x) u.
  Vector Dynamics(const Vector& x, const Vector& u) const;

  /// (i, j) = d f_i / d x_j.
  Matrix JacF(const Vector& x) const;
  /// Jacobian of the i-th column of B.
  Matrix JacBColumn(const Vector& x, int column) const;
  /// Jacobian of x -> f(x) + B(x) u with u frozen.
  Matrix AMatrix(const Vector& x, const Vector& u) const;

  bool has_constant_b() const { return constant_b_; }

 private:
  void CheckDimensions(const Vector& x) const;

  int n_;
  int m_;
  std::string name_;
  Box domain_;
  expr::VarTable vars_;
  std::vector<expr::Expr> f_;
  std::vector<std::vector<expr::Expr>> b_;
  std::vector<std::vector<expr::Expr>> jac_f_;
  // jac_b_[col][row][var]
  std::vector<std::vector<std::vector<expr::Expr>>> jac_b_;
  bool constant_b_{true};
};

enum class MetricRole { kPrimal, kDual };

const char* ToString(MetricRole role);

/// Symmetric matrix field over x1..xn together with its claimed eigenvalue
/// bounds and contraction rate. A kDual field stores W = M^{-1}.
class MetricField {
 public:
  /// `entries` is n x n; only the upper triangle (j >= i) is read and
  /// mirrored.
  MetricField(std::vector<std::vector<expr::Expr>> entries, double p_lo,
              double p_hi, double lambda, MetricRole role);

  static MetricField Constant(const Matrix& value, double p_lo, double p_hi,
                              double lambda, MetricRole role);

  /// Constant field with bounds taken from the eigenvalues of `value`.
  static MetricField Constant(const Matrix& value, double lambda,
                              MetricRole role);

  int n() const { return n_; }
  double p_lo() const { return p_lo_; }
  double p_hi() const { return p_hi_; }
  double lambda() const { return lambda_; }
  MetricRole role() const { return role_; }
  bool is_constant() const { return constant_; }
  const expr::Expr& entry(int i, int j) const { return entries_[i][j]; }

  Matrix Eval(const Vector& x) const;
  /// dM/dx_k.
  Matrix Partial(const Vector& x, int k) const;
  /// sum_i v_i dM/dx_i.
  Matrix DirDeriv(const Vector& x, const Vector& v) const;

  /// For a constant field: the inverse with the opposite role, bounds
  /// 1/p_hi..1/p_lo and the same rate. Throws for state-dependent fields.
  MetricField InverseOfConstant() const;

  MetricField WithRole(MetricRole role) const;
  MetricField WithLambda(double lambda) const;

 private:
  int n_;
  std::vector<std::vector<expr::Expr>> entries_;
  // partials_[k][i][j] = d entries_[i][j] / d x_k
  std::vector<std::vector<std::vector<expr::Expr>>> partials_;
  double p_lo_;
  double p_hi_;
  double lambda_;
  MetricRole role_;
  bool constant_{true};
  Matrix constant_value_;
};

/// Target dynamics dx_d/dt = f(x_d) + B(x_d) u_d(t, x_d).
struct ReferenceSpec {
  Vector xd0;
  /// m expressions over RefVars(n).
  std::vector<expr::Expr> ud;

  /// {t, xd1..xdn}.
  static expr::VarTable RefVars(int n);
  static ReferenceSpec FromStrings(const Vector& xd0,
                                   const std::vector<std::string>& ud);

  Vector EvalUd(double t, const Vector& xd) const;
};

struct ReferenceTrace {
  std::vector<double> t;
  std::vector<Vector> xd;
  std::vector<Vector> ud;
  /// Set when integration stopped early (divergence or non-finite values).
  std::optional<std::string> failure;
  double failure_time{0.0};
  /// Samples outside the system's domain box.
  std::size_t domain_violations{0};
  double first_violation_time{-1.0};
};

/// Fixed-step RK4 integration of the target dynamics; u_d is re-evaluated at
/// every stage from its expression. Stops with a failure flag when
/// ||x_d|| exceeds 1e9.
ReferenceTrace GenerateReference(const SystemModel& sys,
                                 const ReferenceSpec& ref, double horizon,
                                 double h);

}  // namespace ccmtrack
