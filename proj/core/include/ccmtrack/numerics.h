#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ccmtrack {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class NotSymmetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN/Inf, divergence, or step-size underflow during time integration.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double time);
  double time() const { return time_; }

 private:
  double time_;
};

/// Eigenvalues in ascending order; column i of `vectors` pairs with values(i).
struct EigenDecomposition {
  Vector values;
  Matrix vectors;
};

/// Largest absolute entry.
double MaxAbs(const Matrix& a);

/// (A + A^T) / 2.
Matrix Sym(const Matrix& a);

/// Throws NotSymmetricError unless ||A - A^T||_max <= 1e-9 max(1, ||A||_max).
void RequireSymmetric(const Matrix& a);

/// Cyclic Jacobi eigensolver for small dense symmetric matrices.
EigenDecomposition SymEig(const Matrix& a);

/// Solves A v = mu B v for symmetric A and B > 0 via the Cholesky factor of B.
/// Returned vectors are B-orthonormal. Throws NotPositiveDefiniteError.
EigenDecomposition GeneralizedSymEig(const Matrix& a, const Matrix& b);

/// Inverse of a square matrix. Throws SingularMatrixError when a pivot of
/// the full-pivoting LU falls below 1e-13 ||A||_max.
Matrix Inverse(const Matrix& a);

/// Orthonormal basis (as columns) of the null space of an m x n matrix with
/// m <= n. The numerical rank counts pivots of a column-pivoted QR of A^T
/// above `tol`. Returns an n x 0 matrix when A has full column rank n.
Matrix NullSpaceBasis(const Matrix& a, double tol = 1e-10);

/// Largest singular value, from SymEig(A^T A).
double SpectralNorm(const Matrix& a);

using OdeField = std::function<Vector(double t, const Vector& x)>;

namespace internal {
inline void RequireFinite(const Vector& v, double t) {
  if (!v.allFinite()) throw NumericalFailure("non-finite derivative", t);
}
}  // namespace internal

/// One classical fourth-order Runge-Kutta step of dx/dt = field(t, x).
template <typename Field>
Vector Rk4Step(Field&& field, const Vector& x, double t, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("Rk4Step: h must be positive");
  const Vector k1 = field(t, x);
  internal::RequireFinite(k1, t);
  const Vector k2 = field(t + 0.5 * h, x + 0.5 * h * k1);
  internal::RequireFinite(k2, t + 0.5 * h);
  const Vector k3 = field(t + 0.5 * h, x + 0.5 * h * k2);
  internal::RequireFinite(k3, t + 0.5 * h);
  const Vector k4 = field(t + h, x + h * k3);
  internal::RequireFinite(k4, t + h);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Accepted steps of an adaptive integration. `t.front()` is the start time
/// and `t.back()` the end time.
struct DenseTrace {
  std::vector<double> t;
  std::vector<Vector> x;

  /// State at a time that was requested in `output_times`.
  const Vector& At(double time) const;
};

/// Adaptive Dormand-Prince 5(4) integration over [t0, t1]. Steps are clipped
/// so that every entry of `output_times` inside the span is hit exactly.
/// Throws NumericalFailure when the step size drops below 1e-12 or the state
/// becomes non-finite.
DenseTrace Rk45Integrate(const OdeField& field, const Vector& x0, double t0,
                         double t1, double rel_tol, double abs_tol,
                         std::span<const double> output_times = {});

/// Gauss-Legendre nodes and weights on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& GaussLegendre(int count);

}  // namespace ccmtrack
