#include "ccmtrack/numerics.h"

#include <algorithm>
#include <map>
#include <mutex>
#include <numbers>

#include <boost/numeric/odeint.hpp>

namespace ccmtrack {

NumericalFailure::NumericalFailure(const std::string& what, double time)
    : std::runtime_error(what + " at t=" + std::to_string(time)),
      time_(time) {}

double MaxAbs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

Matrix Sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

void RequireSymmetric(const Matrix& a) {
  if (a.rows() != a.cols()) throw NotSymmetricError("matrix is not square");
  const double asym = MaxAbs(a - a.transpose());
  if (asym > 1e-9 * std::max(1.0, MaxAbs(a))) {
    throw NotSymmetricError("matrix is not symmetric (||A-A^T||_max = " +
                            std::to_string(asym) + ")");
  }
}

EigenDecomposition SymEig(const Matrix& input) {
  RequireSymmetric(input);
  const Eigen::Index n = input.rows();
  Matrix a = Sym(input);
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.norm();

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off == 0.0 || std::sqrt(off) <= 1e-15 * scale) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) /
              (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&a](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

EigenDecomposition GeneralizedSymEig(const Matrix& a, const Matrix& b) {
  RequireSymmetric(a);
  RequireSymmetric(b);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("GeneralizedSymEig: dimension mismatch");
  }
  Eigen::LLT<Matrix> llt(Sym(b));
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefiniteError(
        "GeneralizedSymEig: right-hand matrix is not positive definite");
  }
  const Matrix l = llt.matrixL();
  // C = L^{-1} A L^{-T}
  const Matrix linv_a = l.triangularView<Eigen::Lower>().solve(Sym(a));
  const Matrix c =
      l.triangularView<Eigen::Lower>().solve(linv_a.transpose()).transpose();
  EigenDecomposition out = SymEig(Sym(c));
  out.vectors = l.transpose().triangularView<Eigen::Upper>().solve(out.vectors);
  return out;
}

Matrix Inverse(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("Inverse: not square");
  const double scale = MaxAbs(a);
  if (scale == 0.0) throw SingularMatrixError("Inverse: zero matrix");
  Eigen::FullPivLU<Matrix> lu(a);
  const Matrix& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (std::abs(packed(i, i)) < 1e-13 * scale) {
      throw SingularMatrixError("Inverse: matrix is singular to working "
                                "precision");
    }
  }
  return lu.inverse();
}

Matrix NullSpaceBasis(const Matrix& a, double tol) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (m > n) throw std::invalid_argument("NullSpaceBasis: requires rows <= cols");
  if (m == 0) return Matrix::Identity(n, n);
  // A^T = Q R P^T; the trailing n - rank columns of Q are orthogonal to
  // range(A^T), i.e. they span null(A).
  Eigen::ColPivHouseholderQR<Matrix> qr(a.transpose());
  const Matrix r = qr.matrixR().template triangularView<Eigen::Upper>();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < std::min(m, n); ++i) {
    if (std::abs(r(i, i)) > tol) ++rank;
  }
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - rank);
}

double SpectralNorm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Matrix gram = a.transpose() * a;
  const EigenDecomposition eig = SymEig(gram);
  return std::sqrt(std::max(0.0, eig.values(eig.values.size() - 1)));
}

const Vector& DenseTrace::At(double time) const {
  auto it = std::lower_bound(t.begin(), t.end(), time);
  if (it == t.end() || *it != time) {
    throw std::out_of_range("DenseTrace::At: time not on the trace");
  }
  return x[static_cast<std::size_t>(it - t.begin())];
}

DenseTrace Rk45Integrate(const OdeField& field, const Vector& x0, double t0,
                         double t1, double rel_tol, double abs_tol,
                         std::span<const double> output_times) {
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<double>;
  if (rel_tol < 1e-12) {
    throw std::invalid_argument("Rk45Integrate: rel_tol must be >= 1e-12");
  }
  if (!(t1 > t0)) throw std::invalid_argument("Rk45Integrate: empty span");

  std::vector<double> stops;
  for (double s : output_times) {
    if (s > t0 && s < t1) stops.push_back(s);
  }
  stops.push_back(t1);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  const auto n = static_cast<Eigen::Index>(x0.size());
  auto system = [&](const State& s, State& ds, double t) {
    Eigen::Map<const Vector> xs(s.data(), n);
    const Vector d = field(t, xs);
    if (!d.allFinite()) throw NumericalFailure("non-finite derivative", t);
    Eigen::Map<Vector>(ds.data(), n) = d;
  };

  auto stepper = odeint::make_controlled(abs_tol, rel_tol,
                                         odeint::runge_kutta_dopri5<State>());
  State state(x0.data(), x0.data() + n);
  double t = t0;
  double dt = std::min(1e-3, 1e-3 * (t1 - t0));

  DenseTrace trace;
  trace.t.push_back(t0);
  trace.x.push_back(x0);

  std::size_t next_stop = 0;
  while (next_stop < stops.size()) {
    const double target = stops[next_stop];
    const double proposed = dt;
    const bool clipped = t + dt >= target;
    if (clipped) dt = target - t;
    if (dt < 1e-12) {
      if (clipped && dt < 1e-14 * std::max(1.0, std::abs(target))) {
        t = target;
        trace.t.back() = target;
        ++next_stop;
        dt = proposed;
        continue;
      }
      throw NumericalFailure("step size underflow (stiff problem?)", t);
    }
    const auto result = stepper.try_step(system, state, t, dt);
    if (result != odeint::success) continue;
    if (clipped) {
      t = target;
      ++next_stop;
      dt = std::max(dt, proposed);
    }
    Eigen::Map<const Vector> xs(state.data(), n);
    if (!xs.allFinite()) throw NumericalFailure("non-finite state", t);
    trace.t.push_back(t);
    trace.x.push_back(xs);
  }
  return trace;
}

const QuadratureRule& GaussLegendre(int count) {
  if (count < 1) throw std::invalid_argument("GaussLegendre: count < 1");
  static std::mutex mutex;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(count);
  if (it != cache.end()) return it->second;

  QuadratureRule rule;
  rule.nodes.resize(count);
  rule.weights.resize(count);
  for (int i = 0; i < count; ++i) {
    // Chebyshev initial guess, refined by Newton on P_count.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= count; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = count * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes[count - 1 - i] = x;
    rule.weights[count - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return cache.emplace(count, std::move(rule)).first->second;
}

}  // namespace ccmtrack
