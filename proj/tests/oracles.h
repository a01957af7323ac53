#pragma once

// Reference computations that do not go through the library code paths they
// are used to check.

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "ccmtrack/expr.h"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double CentralDifference(const std::function<double(double)>& f, double x,
                                double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Random smooth expression over `vars` variables. Every node is defined for
/// all real inputs, so any sample point is non-singular.
inline ccmtrack::expr::Expr RandomSmoothExpr(std::mt19937_64& rng, int vars,
                                             int depth) {
  using ccmtrack::expr::Expr;
  using ccmtrack::expr::Op;
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 9);
  std::uniform_real_distribution<double> value(-2.0, 2.0);
  std::uniform_int_distribution<int> var(0, vars - 1);
  const int kind = pick(rng);
  auto sub = [&] { return RandomSmoothExpr(rng, vars, depth - 1); };
  switch (kind) {
    case 0:
      return Expr::Constant(std::round(value(rng) * 4.0) / 4.0);
    case 1: {
      const int i = var(rng);
      return Expr::Variable(i, "x" + std::to_string(i + 1));
    }
    case 2:
      return Expr::Binary(Op::kAdd, sub(), sub());
    case 3:
      return Expr::Binary(Op::kSub, sub(), sub());
    case 4:
      return Expr::Binary(Op::kMul, sub(), sub());
    case 5: {
      // a / (1 + b^2) never divides by zero.
      const Expr den = Expr::Binary(Op::kAdd, Expr::Constant(1.0),
                                    Expr::Power(sub(), 2));
      return Expr::Binary(Op::kDiv, sub(), den);
    }
    case 6:
      return Expr::Unary(Op::kSin, sub());
    case 7:
      return Expr::Unary(Op::kCos, sub());
    case 8:
      return Expr::Power(sub(), std::uniform_int_distribution<int>(2, 3)(rng));
    default: {
      // sqrt(1 + a^2) and exp(sin a) stay smooth and bounded.
      if (std::bernoulli_distribution(0.5)(rng)) {
        return Expr::Unary(Op::kSqrt, Expr::Binary(Op::kAdd, Expr::Constant(1.0),
                                                   Expr::Power(sub(), 2)));
      }
      return Expr::Unary(Op::kExp, Expr::Unary(Op::kSin, sub()));
    }
  }
}

/// Shortest path length between two lattice points under the Riemannian
/// metric `m`, by Dijkstra over a square lattice with every primitive step
/// (a, b), |a|, |b| <= reach. Edge lengths use Simpson's rule on
/// sqrt(dx^T M dx).
struct LatticeResult {
  double length;
  std::vector<Vector> path;
};

inline LatticeResult LatticeGeodesic(
    const std::function<Matrix(const Vector&)>& m, const Vector& lo,
    const Vector& hi, double spacing, const Vector& from, const Vector& to,
    int reach = 6) {
  const int nx = static_cast<int>(std::lround((hi(0) - lo(0)) / spacing)) + 1;
  const int ny = static_cast<int>(std::lround((hi(1) - lo(1)) / spacing)) + 1;
  auto point = [&](int i, int j) {
    Vector p(2);
    p << lo(0) + i * spacing, lo(1) + j * spacing;
    return p;
  };
  auto index_of = [&](const Vector& p) {
    const int i = static_cast<int>(std::lround((p(0) - lo(0)) / spacing));
    const int j = static_cast<int>(std::lround((p(1) - lo(1)) / spacing));
    return std::make_pair(i, j);
  };
  std::vector<std::pair<int, int>> steps;
  for (int a = -reach; a <= reach; ++a) {
    for (int b = -reach; b <= reach; ++b) {
      if ((a == 0 && b == 0) || std::gcd(std::abs(a), std::abs(b)) != 1) continue;
      steps.emplace_back(a, b);
    }
  }
  auto edge = [&](const Vector& p, const Vector& q) {
    const Vector d = q - p;
    auto speed = [&](const Vector& x) { return std::sqrt(d.dot(m(x) * d)); };
    return (speed(p) + 4.0 * speed(0.5 * (p + q)) + speed(q)) / 6.0;
  };
  const auto [si, sj] = index_of(from);
  const auto [ti, tj] = index_of(to);
  const std::size_t total = static_cast<std::size_t>(nx) * ny;
  std::vector<double> dist(total, std::numeric_limits<double>::infinity());
  std::vector<long> prev(total, -1);
  using Item = std::pair<double, long>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  const long start = static_cast<long>(si) * ny + sj;
  const long goal = static_cast<long>(ti) * ny + tj;
  dist[start] = 0.0;
  queue.emplace(0.0, start);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    if (u == goal) break;
    const int i = static_cast<int>(u / ny);
    const int j = static_cast<int>(u % ny);
    const Vector p = point(i, j);
    for (const auto& [a, b] : steps) {
      const int ii = i + a;
      const int jj = j + b;
      if (ii < 0 || jj < 0 || ii >= nx || jj >= ny) continue;
      const long v = static_cast<long>(ii) * ny + jj;
      const double nd = d + edge(p, point(ii, jj));
      if (nd < dist[v]) {
        dist[v] = nd;
        prev[v] = u;
        queue.emplace(nd, v);
      }
    }
  }
  LatticeResult result{dist[goal], {}};
  for (long v = goal; v != -1; v = prev[v]) {
    result.path.push_back(point(static_cast<int>(v / ny), static_cast<int>(v % ny)));
  }
  return result;
}

/// Adaptive Dormand-Prince integration straight from Boost.Odeint; the
/// last step is shortened to land on t1.
inline std::vector<double> OdeintSolve(
    const std::function<void(const std::vector<double>&, std::vector<double>&,
                             double)>& rhs,
    std::vector<double> x0, double t0, double t1, double rel_tol,
    double abs_tol) {
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<double>;
  auto stepper = odeint::make_controlled(
      abs_tol, rel_tol, odeint::runge_kutta_dopri5<State>());
  odeint::integrate_adaptive(stepper, rhs, x0, t0, t1, 1e-4);
  return x0;
}

}  // namespace oracle
