#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ccmtrack/controller.h"
#include "ccmtrack/geodesic.h"
#include "ccmtrack/model.h"

namespace ccmtrack {

enum class ControllerKind { kDynExt, kGeodesic, kStatic, kCustom };

const char* ToString(ControllerKind kind);
/// Accepts "dynext", "geodesic", "static", "custom".
ControllerKind ParseControllerKind(std::string_view name);

/// Variables available to custom controller expressions:
/// {t, x1..xn, xd1..xdn, z1..zn, ud1..udm}.
expr::VarTable CustomControllerVars(int n, int m);

struct RunConfig {
  ControllerKind controller = ControllerKind::kStatic;
  double horizon = 20.0;
  double h = 1e-3;
  Vector x0;
  /// Overrides the reference's initial state when set.
  std::optional<Vector> xd0;
  /// Dynext observer state; defaults to x_d0.
  std::optional<Vector> z0;
  double ell = 5.0;
  /// Gauss-Legendre nodes per one-dimensional potential integral.
  int quadrature_nodes = 32;
  int geodesic_segments = 32;
  int geodesic_quadrature = 3;
  GeodesicOptions geodesic;
  /// Hold the dynext/geodesic control constant within each RK4 step instead
  /// of re-evaluating it at every stage.
  bool zero_order_hold = false;
  /// Custom controller: m expressions over CustomControllerVars(n, m).
  std::vector<expr::Expr> custom;
  /// Grid on which the static controller verifies exactness; defaults to
  /// 21 points per axis over the system domain.
  std::optional<Grid> exactness_grid;
  double exactness_tol = 1e-10;
  /// States with a norm above this abort the run.
  double divergence_bound = 1e9;
};

/// Uniformly sampled closed-loop trajectory. All series share the time grid.
struct SimTrace {
  ControllerKind controller{ControllerKind::kStatic};
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<Vector> xd;
  /// Empty unless the controller is dynext.
  std::vector<Vector> z;
  std::vector<Vector> u;
  std::vector<Vector> ud;
  /// ||x - x_d||_2.
  std::vector<double> err;

  std::optional<std::string> failure;
  double failure_time{0.0};
  std::size_t domain_violations{0};
  double first_violation_time{-1.0};

  bool has_z() const { return !z.empty(); }
  bool completed() const { return !failure.has_value(); }
  double final_error() const { return err.empty() ? 0.0 : err.back(); }
  double max_error() const;
};

/// Integrates plant, reference and (for dynext) z as one coupled state with
/// fixed-step RK4. On divergence, non-finite values or controller failure
/// the trace is truncated at the last good sample and `failure` is set.
/// Throws ExactnessError / std::invalid_argument for unusable setups.
SimTrace RunClosedLoop(const SystemModel& sys, const MetricField& metric,
                       const GainField& gain, const ReferenceSpec& ref,
                       const RunConfig& cfg);

/// Least-squares slope of -log(value) against time on [t_a, t_b].
double DecayRate(const std::vector<double>& t, const std::vector<double>& value,
                 double t_a, double t_b);
double DecayRate(const SimTrace& trace, double t_a, double t_b);

struct SweepRow {
  double radius{0.0};
  int samples{0};
  int converged{0};
  double fraction() const {
    return samples > 0 ? static_cast<double>(converged) / samples : 0.0;
  }
};

struct SweepOptions {
  std::vector<double> radii;
  int samples = 16;
  std::uint64_t seed = 1;
  double threshold = 1e-2;
  /// 0 = hardware concurrency.
  int threads = 0;
};

/// For each radius, runs closed loops from initial states drawn uniformly on
/// the sphere of that radius around x_d0 and counts runs that complete with
/// err(T) < threshold. Deterministic for a given seed.
std::vector<SweepRow> PerturbationSweep(const SystemModel& sys,
                                        const MetricField& metric,
                                        const GainField& gain,
                                        const ReferenceSpec& ref,
                                        const RunConfig& cfg,
                                        const SweepOptions& opts);

/// Columns t, x1..xn, xd1..xdn, [z1..zn], u1..um, ud1..udm, err with 17
/// significant digits.
void WriteTraceCsv(std::ostream& out, const SimTrace& trace);

}  // namespace ccmtrack
