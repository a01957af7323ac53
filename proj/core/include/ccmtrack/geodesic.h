#pragma once

#include <optional>
#include <vector>

#include "ccmtrack/controller.h"
#include "ccmtrack/model.h"

namespace ccmtrack {

struct GeodesicOptions {
  int max_iterations = 500;
  /// Converged when the largest interior gradient norm is at most this.
  double grad_tol = 1e-8;
  /// Converged when an accepted step lowers the energy by less than this.
  double energy_tol = 1e-12;
  double armijo_c = 1e-4;
  int max_backtracks = 60;
};

/// Discretized curve from x_a (row 0) to x_b (row N).
struct GeodesicPath {
  Matrix nodes;
  double energy{0.0};
  int iterations{0};
  bool converged{false};
  /// Energy of the starting path followed by every accepted iterate.
  std::vector<double> energy_history;
  /// max/min of segment metric lengths minus 1; 0 for a constant-speed path.
  double speed_spread{0.0};

  /// sqrt(energy): the Riemannian length of a constant-speed path.
  double distance() const;
};

class GeodesicError : public std::runtime_error {
 public:
  GeodesicError(const std::string& what, GeodesicPath best);
  const GeodesicPath& best() const { return best_; }

 private:
  GeodesicPath best_;
};

/// sum_k N dx_k^T M(mid_k) dx_k over the N segments of `nodes`.
double RiemannEnergy(const MetricField& metric, const Matrix& nodes);

/// Gradient of RiemannEnergy with respect to every node; rows 0 and N are
/// zero because the endpoints are pinned.
Matrix RiemannEnergyGradient(const MetricField& metric, const Matrix& nodes);

/// Straight chord with N segments.
Matrix StraightPath(const Vector& x_a, const Vector& x_b, int segments);

/// Minimizes the discrete energy over interior nodes by preconditioned
/// gradient descent with Armijo backtracking. `warm` (same shape) is used
/// when its energy does not exceed the straight chord's; its endpoints are
/// re-pinned.
GeodesicPath SolveGeodesic(const MetricField& metric, const Vector& x_a,
                           const Vector& x_b, int segments = 32,
                           const GeodesicOptions& opts = {},
                           const Matrix* warm = nullptr);

/// sum_k int_0^1 K(x_k + s dx_k) dx_k ds, each segment by Gauss-Legendre.
Vector PathIntegral(const GainField& gain, const Matrix& nodes,
                    int nodes_per_segment = 3);

/// u = u_d + integral of K along the minimal geodesic from x_d to x. Keeps
/// the previous path as a warm start for the next call.
class PathIntegralController {
 public:
  PathIntegralController(MetricField metric, GainField gain,
                         int segments = 32, GeodesicOptions opts = {},
                         int nodes_per_segment = 3);

  /// Throws GeodesicError when the solver does not converge.
  Vector Control(const Vector& x, const Vector& xd, const Vector& ud);

  const std::optional<GeodesicPath>& last_path() const { return last_; }
  void Reset() { last_.reset(); }

 private:
  MetricField metric_;
  GainField gain_;
  int segments_;
  GeodesicOptions opts_;
  int quad_nodes_;
  std::optional<GeodesicPath> last_;
};

}  // namespace ccmtrack
