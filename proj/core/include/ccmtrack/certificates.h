#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ccmtrack/grid.h"
#include "ccmtrack/model.h"

namespace ccmtrack {

/// Raised when the metric handed to a check violates its preconditions
/// (wrong role, or the restricted metric is not positive definite).
class MetricBoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MarginStats {
  double min{0.0};
  double max{0.0};
  double mean{0.0};
  std::size_t points{0};
  /// Grid points at which the condition fails on its own.
  std::size_t violations{0};
};

/// Outcome of one grid check. `worst_margin` is the largest per-point margin
/// and `witness_state` is the grid point attaining it.
struct CertificateReport {
  std::string condition;
  bool pass{false};
  double worst_margin{0.0};
  Vector witness_state;
  Vector witness_direction;
  MarginStats stats;
  double tolerance{0.0};
  /// Additional named results (certified rate, sub-check values, ...).
  std::vector<std::pair<std::string, double>> extras;

  std::optional<double> Extra(const std::string& key) const;
};

struct CheckOptions {
  double tol = 1e-8;
  /// Worker threads for the grid scan; 0 = hardware concurrency.
  int threads = 0;
};

/// Killing-field residual of the primal metric along every input column:
/// max over grid and columns of
///   || d_{B_i} M + (dB_i/dx)^T M + M dB_i/dx ||_max.
/// Passes when the residual is <= tol.
CertificateReport CheckKillingPde(const SystemModel& sys,
                                  const MetricField& metric, const Grid& grid,
                                  const CheckOptions& opts = {});

/// Q(x) = d_f M + M df/dx + (df/dx)^T M, the symmetric part of the
/// contraction form.
Matrix ContractionForm(const SystemModel& sys, const MetricField& metric,
                       const Vector& x);

/// Largest generalized eigenvalue of (N^T Q N, N^T M N) with
/// N = null((M B)^T) at one state, and the direction v = N y attaining it.
PointMargin C1MarginAt(const SystemModel& sys, const MetricField& metric,
                       const Vector& x);

/// Contraction condition restricted to the annihilator of M B. The worst
/// margin mu* gives the certified rate lambda* = -mu* (extra
/// "certified_rate"). With metric.lambda() > 0 the check passes when
/// mu* <= -lambda + tol; otherwise it passes when mu* < -tol.
CertificateReport CheckC1(const SystemModel& sys, const MetricField& metric,
                          const Grid& grid, const CheckOptions& opts = {});

/// Dual-metric form on W = M^{-1}:
///   (a) max eig of B_perp^T (d_f W + J W + W J^T) B_perp < 0
///   (b) || d_{B_i} W - (dB_i/dx) W - W (dB_i/dx)^T ||_max <= tol
/// `worst_margin` reports (a); (b) is the extra "killing_residual".
CertificateReport CheckDualW(const SystemModel& sys, const MetricField& dual,
                             const Grid& grid, const CheckOptions& opts = {});

enum class RobustLambdaForm {
  /// lambda I_n in the (1,1) block.
  kIdentity,
  /// lambda M(x) in the (1,1) block.
  kMetric,
};

/// Robust (incremental ISS) LMI restricted to blockdiag(N, I_n):
///   [[Q + lambda I, M], [M, -gamma0 I]]  (or lambda M, see form).
/// Passes when the worst max-eigenvalue is < -tol.
CertificateReport CheckRobust(const SystemModel& sys, const MetricField& metric,
                              const Grid& grid, double lambda, double gamma0,
                              RobustLambdaForm form = RobustLambdaForm::kIdentity,
                              const CheckOptions& opts = {});

/// Smallest gamma0 in [lo, hi] for which CheckRobust passes, by bisection on
/// a log scale to relative width `rel_tol`. Returns nullopt when even `hi`
/// fails.
std::optional<double> RobustGamma0Min(
    const SystemModel& sys, const MetricField& metric, const Grid& grid,
    double lambda, RobustLambdaForm form = RobustLambdaForm::kIdentity,
    const CheckOptions& opts = {}, double lo = 1e-9, double hi = 1e9,
    double rel_tol = 1e-9);

/// p_lo I <= M(x) <= p_hi I on the grid (1e-9 slack). worst_margin is the
/// largest bound violation (negative when both bounds hold strictly).
CertificateReport CheckMetricBounds(const MetricField& metric, const Grid& grid,
                                    const CheckOptions& opts = {});

enum class DualFlowForm {
  /// dp/dt = (df/dx)^T p.
  kTransposed,
  /// dp/dt = (df/dx) p, the flow whose p^T M p derivative is the C1 form.
  kDirect,
};

struct DualFlowTrace {
  std::vector<double> t;
  std::vector<Vector> p;
  /// p^T M(x) p.
  std::vector<double> energy;
  /// (M(x) B(x))^T p.
  std::vector<Vector> output;
};

/// Integrates the dual differential system along a recorded state trace with
/// RK4 on the trace's own (uniform) time grid. Intermediate stages use the
/// midpoint of consecutive states. Diagnostic only.
DualFlowTrace DualFlowDiagnostic(const SystemModel& sys,
                                 const MetricField& metric,
                                 const std::vector<double>& times,
                                 const std::vector<Vector>& states,
                                 const Vector& p0,
                                 DualFlowForm form = DualFlowForm::kTransposed);

}  // namespace ccmtrack
