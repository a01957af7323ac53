#include "ccmtrack/geodesic.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ccmtrack {

namespace {

void RequireNodes(const MetricField& metric, const Matrix& nodes) {
  if (nodes.rows() < 2) throw std::invalid_argument("geodesic: need >= 2 nodes");
  if (nodes.cols() != metric.n()) {
    throw std::invalid_argument("geodesic: node dimension differs from metric");
  }
}

// Solves tridiag(-1, 2, -1) y = rhs column by column (Thomas algorithm).
Matrix SolveLaplacian(const Matrix& rhs) {
  const Eigen::Index k = rhs.rows();
  Matrix y = rhs;
  std::vector<double> c(static_cast<std::size_t>(k));
  double denom = 2.0;
  c[0] = -1.0 / denom;
  y.row(0) /= denom;
  for (Eigen::Index i = 1; i < k; ++i) {
    denom = 2.0 + c[i - 1];
    c[i] = -1.0 / denom;
    y.row(i) = (y.row(i) + y.row(i - 1)) / denom;
  }
  for (Eigen::Index i = k - 2; i >= 0; --i) y.row(i) -= c[i] * y.row(i + 1);
  return y;
}

double SafeEnergy(const MetricField& metric, const Matrix& nodes) {
  try {
    const double e = RiemannEnergy(metric, nodes);
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
  } catch (const expr::DomainError&) {
    return std::numeric_limits<double>::infinity();
  }
}

double SpeedSpread(const MetricField& metric, const Matrix& nodes) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Eigen::Index k = 0; k + 1 < nodes.rows(); ++k) {
    const Vector dx = (nodes.row(k + 1) - nodes.row(k)).transpose();
    const Vector mid = 0.5 * (nodes.row(k + 1) + nodes.row(k)).transpose();
    const double len = std::sqrt(std::max(0.0, dx.dot(metric.Eval(mid) * dx)));
    lo = std::min(lo, len);
    hi = std::max(hi, len);
  }
  if (hi == 0.0) return 0.0;
  return lo > 0.0 ? hi / lo - 1.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

double GeodesicPath::distance() const { return std::sqrt(std::max(0.0, energy)); }

GeodesicError::GeodesicError(const std::string& what, GeodesicPath best)
    : std::runtime_error(what), best_(std::move(best)) {}

double RiemannEnergy(const MetricField& metric, const Matrix& nodes) {
  RequireNodes(metric, nodes);
  const auto segments = static_cast<double>(nodes.rows() - 1);
  double energy = 0.0;
  for (Eigen::Index k = 0; k + 1 < nodes.rows(); ++k) {
    const Vector dx = (nodes.row(k + 1) - nodes.row(k)).transpose();
    const Vector mid = 0.5 * (nodes.row(k + 1) + nodes.row(k)).transpose();
    energy += segments * dx.dot(metric.Eval(mid) * dx);
  }
  return energy;
}

Matrix RiemannEnergyGradient(const MetricField& metric, const Matrix& nodes) {
  RequireNodes(metric, nodes);
  const Eigen::Index last = nodes.rows() - 1;
  const int n = metric.n();
  const auto segments = static_cast<double>(last);
  Matrix grad = Matrix::Zero(nodes.rows(), n);
  for (Eigen::Index k = 0; k < last; ++k) {
    const Vector dx = (nodes.row(k + 1) - nodes.row(k)).transpose();
    const Vector mid = 0.5 * (nodes.row(k + 1) + nodes.row(k)).transpose();
    const Vector pull = 2.0 * segments * (metric.Eval(mid) * dx);
    Vector bend = Vector::Zero(n);
    if (!metric.is_constant()) {
      for (int l = 0; l < n; ++l) {
        bend(l) = 0.5 * segments * dx.dot(metric.Partial(mid, l) * dx);
      }
    }
    // d/dx_{k+1} and d/dx_k of the segment term.
    grad.row(k + 1) += (pull + bend).transpose();
    grad.row(k) += (bend - pull).transpose();
  }
  grad.row(0).setZero();
  grad.row(last).setZero();
  return grad;
}

Matrix StraightPath(const Vector& x_a, const Vector& x_b, int segments) {
  if (segments < 1) throw std::invalid_argument("geodesic: segments >= 1");
  Matrix nodes(segments + 1, x_a.size());
  for (int k = 0; k <= segments; ++k) {
    const double mu = static_cast<double>(k) / segments;
    nodes.row(k) = ((1.0 - mu) * x_a + mu * x_b).transpose();
  }
  nodes.row(0) = x_a.transpose();
  nodes.row(segments) = x_b.transpose();
  return nodes;
}

GeodesicPath SolveGeodesic(const MetricField& metric, const Vector& x_a,
                           const Vector& x_b, int segments,
                           const GeodesicOptions& opts, const Matrix* warm) {
  if (segments < 2) throw std::invalid_argument("geodesic: N must be >= 2");
  if (x_a.size() != metric.n() || x_b.size() != metric.n()) {
    throw std::invalid_argument("geodesic: endpoint dimension differs from metric");
  }
  GeodesicPath path;
  path.nodes = StraightPath(x_a, x_b, segments);
  path.energy = RiemannEnergy(metric, path.nodes);
  if (warm != nullptr && warm->rows() == segments + 1 &&
      warm->cols() == metric.n()) {
    Matrix candidate = *warm;
    candidate.row(0) = x_a.transpose();
    candidate.row(segments) = x_b.transpose();
    const double e = SafeEnergy(metric, candidate);
    if (e <= path.energy) {
      path.nodes = std::move(candidate);
      path.energy = e;
    }
  }
  path.energy_history.push_back(path.energy);

  if (x_a == x_b) {
    path.converged = true;
    return path;
  }

  const Matrix metric_inv = Inverse(metric.Eval(0.5 * (x_a + x_b)));
  const double scale = 1.0 / (2.0 * segments);
  const Eigen::Index interior = segments - 1;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Matrix grad = RiemannEnergyGradient(metric, path.nodes);
    const Matrix g = grad.middleRows(1, interior);
    if (g.rowwise().norm().maxCoeff() <= opts.grad_tol) {
      path.converged = true;
      break;
    }
    Matrix dir = -scale * SolveLaplacian(g * metric_inv);
    double slope = (g.array() * dir.array()).sum();
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
    }
    double alpha = 1.0;
    bool accepted = false;
    Matrix trial;
    double trial_energy = 0.0;
    for (int b = 0; b < opts.max_backtracks; ++b) {
      trial = path.nodes;
      trial.middleRows(1, interior) += alpha * dir;
      trial_energy = SafeEnergy(metric, trial);
      if (trial_energy <= path.energy + opts.armijo_c * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No representable decrease remains along a descent direction.
      path.converged = true;
      break;
    }
    const double decrease = path.energy - trial_energy;
    path.nodes = std::move(trial);
    path.energy = trial_energy;
    path.energy_history.push_back(trial_energy);
    ++path.iterations;
    if (decrease < opts.energy_tol) {
      path.converged = true;
      break;
    }
  }
  path.speed_spread = SpeedSpread(metric, path.nodes);
  return path;
}

Vector PathIntegral(const GainField& gain, const Matrix& nodes,
                    int nodes_per_segment) {
  const QuadratureRule& rule = GaussLegendre(nodes_per_segment);
  Vector total = Vector::Zero(gain.m());
  for (Eigen::Index k = 0; k + 1 < nodes.rows(); ++k) {
    const Vector a = nodes.row(k).transpose();
    const Vector dx = (nodes.row(k + 1) - nodes.row(k)).transpose();
    if (dx.isZero(0.0)) continue;
    for (int q = 0; q < nodes_per_segment; ++q) {
      const double s = 0.5 * (rule.nodes[q] + 1.0);
      total += 0.5 * rule.weights[q] * (gain.Eval(a + s * dx) * dx);
    }
  }
  return total;
}

PathIntegralController::PathIntegralController(MetricField metric,
                                               GainField gain, int segments,
                                               GeodesicOptions opts,
                                               int nodes_per_segment)
    : metric_(std::move(metric)),
      gain_(std::move(gain)),
      segments_(segments),
      opts_(opts),
      quad_nodes_(nodes_per_segment) {
  if (metric_.n() != gain_.n()) {
    throw std::invalid_argument("path-integral controller: dimension mismatch");
  }
}

Vector PathIntegralController::Control(const Vector& x, const Vector& xd,
                                       const Vector& ud) {
  if (x == xd) return ud;
  std::optional<Matrix> warm;
  if (last_) {
    // Shift the previous curve by a linear blend of the endpoint moves.
    const Matrix& prev = last_->nodes;
    const Vector da = xd - prev.row(0).transpose();
    const Vector db = x - prev.row(segments_).transpose();
    warm = prev;
    for (int k = 0; k <= segments_; ++k) {
      const double mu = static_cast<double>(k) / segments_;
      warm->row(k) += ((1.0 - mu) * da + mu * db).transpose();
    }
  }
  GeodesicPath path =
      SolveGeodesic(metric_, xd, x, segments_, opts_, warm ? &*warm : nullptr);
  if (!path.converged) {
    throw GeodesicError("geodesic solver did not converge in " +
                            std::to_string(path.iterations) +
                            " iterations (energy " +
                            std::to_string(path.energy) + ")",
                        std::move(path));
  }
  const Vector u = ud + PathIntegral(gain_, path.nodes, quad_nodes_);
  last_ = std::move(path);
  return u;
}

}  // namespace ccmtrack
