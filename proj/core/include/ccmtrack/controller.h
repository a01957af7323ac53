#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ccmtrack/grid.h"
#include "ccmtrack/model.h"

namespace ccmtrack {

/// Damping-injection parameters. `r` <= 0 selects r = 1/lambda.
struct DampingParams {
  double r = 0.0;
  double gamma0 = 1.0;
  /// Replaces gamma(x) = (r/p_lo) Upsilon(x)^2 by a constant.
  std::optional<double> gamma_const;
};

/// min{lambda - 1/(2r), 2/p_lo}; informational.
double Lambda0(double r, double lambda, double p_lo);

/// Raised when the damping matrix [(MB)^T MB]^{-1} does not exist.
class SynthesisError : public std::runtime_error {
 public:
  SynthesisError(const std::string& what, Vector witness);
  const Vector& witness() const { return witness_; }

 private:
  Vector witness_;
};

/// Raised when a controller requires an exact (curl-free) gain and the gain
/// is not.
class ExactnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Differential gain K(x) in R^{m x n}.
class GainField {
 public:
  enum class Kind { kExpression, kSynthesized };

  /// `entries` is m rows of n expressions over SystemModel::StateVars(n).
  static GainField FromExpressions(std::vector<std::vector<expr::Expr>> entries,
                                   int n);
  static GainField FromStrings(const std::vector<std::vector<std::string>>& rows,
                               int n);
  static GainField Constant(const Matrix& k);
  /// K(x) = -[gamma(x) + gamma0] [(MB)^T MB]^{-1} (MB)^T.
  static GainField Synthesized(const SystemModel& sys, const MetricField& metric,
                               const DampingParams& params);

  Kind kind() const;
  int m() const;
  int n() const;
  bool is_constant() const;

  Matrix Eval(const Vector& x) const;
  /// dK/dx_k. Symbolic for expression gains, central differences otherwise.
  Matrix Partial(const Vector& x, int k) const;

  /// Expression kind only.
  const std::vector<std::vector<expr::Expr>>& entries() const;

  /// Synthesized kind only.
  const DampingParams& params() const;
  double Gamma(const Vector& x) const;
  /// -[(MB)^T MB]^{-1} (MB)^T, so that K = (gamma + gamma0) * direction.
  Matrix Direction(const Vector& x) const;
  /// True when gamma0 == 0 and gamma is the constant 0, i.e. K == 0.
  bool degenerate() const;

 private:
  struct Impl;
  explicit GainField(std::shared_ptr<const Impl> impl);
  std::shared_ptr<const Impl> impl_;
};

/// Spectral norm of d_f M + (df/dx)^T M + M df/dx.
double Upsilon(const SystemModel& sys, const MetricField& metric,
               const Vector& x);

/// Builds the damping-injection gain and verifies that the damping matrix
/// exists at every point of `grid`. Requires a primal metric with
/// lambda > 0 and r * 2 lambda > 1.
GainField SynthesizeGain(const SystemModel& sys, const MetricField& metric,
                         const DampingParams& params, const Grid& grid);

struct ExactnessReport {
  double residual{0.0};
  Vector witness;
  int row{0};
  int axis_i{0};
  int axis_j{0};
};

/// max over grid, rows and axis pairs i < j of |dK_{r,i}/dx_j - dK_{r,j}/dx_i|.
ExactnessReport ExactnessResidual(const GainField& gain, const Grid& grid,
                                  int threads = 0);

/// beta(x) = int_0^1 K(s x) x ds by Gauss-Legendre.
Vector RadialPotential(const GainField& gain, const Vector& x, int nodes = 32);

/// beta(x) along the coordinate-axis path 0 -> x1 e1 -> ... -> x.
Vector AxisPathPotential(const GainField& gain, const Vector& x, int nodes = 32);

/// u = u_d + beta(x) - beta(x_d). Refuses gains that are not exact on the
/// supplied grid.
class StaticExactController {
 public:
  StaticExactController(GainField gain, const Grid& check_grid,
                        double tol = 1e-10, int nodes = 32);

  Vector Control(const Vector& x, const Vector& xd, const Vector& ud) const;
  double residual() const { return residual_; }

 private:
  GainField gain_;
  int nodes_;
  double residual_;
};

/// beta(x, z) = sum_i int_0^{x_i} K_col_i(z with slot i = mu) dmu.
Vector DynExtBeta(const GainField& gain, const Vector& x, const Vector& z,
                  int nodes = 32);

struct DynExtState {
  Vector z;
  double ell{1.0};
};

/// u = u_d + beta(x, z) - beta(x_d, z) and
/// dz/dt = f(x) + B(x) u - ell (z - x).
class DynExtController {
 public:
  DynExtController(const SystemModel& sys, GainField gain, int nodes = 32);

  Vector Control(const Vector& x, const Vector& z, const Vector& xd,
                 const Vector& ud) const;
  Vector ZDot(const Vector& x, const Vector& z, const Vector& u,
              double ell) const;

 private:
  SystemModel sys_;
  GainField gain_;
  int nodes_;
};

/// Computes u from the current z, then advances z by one RK4 step with x and
/// u frozen. Throws NumericalFailure (time `t`) when z becomes non-finite.
Vector DynExtControllerStep(const SystemModel& sys, const GainField& gain,
                            DynExtState& state, const Vector& x,
                            const Vector& xd, const Vector& ud, double h,
                            double t = 0.0);

}  // namespace ccmtrack
