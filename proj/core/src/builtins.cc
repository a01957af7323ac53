#include "ccmtrack/builtins.h"

#include <stdexcept>

namespace ccmtrack {

namespace {

Vector Vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Builtin Numex() {
  Box box{Vec({-6.0, -6.0}), Vec({6.0, 6.0})};
  SystemModel sys = SystemModel::FromStrings(
      {"(1/3)*x2^3 + x2", "-x2"}, {{"0"}, {"1"}}, box, "numex");

  Matrix w(2, 2);
  w << 3.0, -1.0, -1.0, 2.0;
  const MetricField dual = MetricField::Constant(w, 0.0, MetricRole::kDual);
  Matrix m(2, 2);
  m << 0.4, 0.2, 0.2, 0.6;
  const MetricField primal =
      MetricField::Constant(m, 2.0 / 3.0, MetricRole::kPrimal);
  std::map<std::string, MetricField> metrics{
      {"primal", primal},
      {"dual", dual},
      {"dual_as_primal", dual.WithRole(MetricRole::kPrimal)},
  };

  ReferenceSpec ref =
      ReferenceSpec::FromStrings(Vec({3.0, -1.0}), {"sin(t) - cos(t)^2 * xd1"});
  GainField gain = GainField::FromStrings({{"-(x2^2 + 1)", "-x2^2"}}, 2);

  Scenario sc{Vec({-5.0, 2.0}), Vec({0.0, 0.0}), 5.0, 20.0, 1e-3, "dynext"};
  return Builtin{std::move(sys), std::move(metrics), std::move(ref),
                 std::move(gain), DampingParams{0.0, 1.0, std::nullopt},
                 std::move(sc)};
}

Builtin Microactuator() {
  Box box{Vec({0.0, -2.0, 0.0}), Vec({2.0, 2.0, 3.0})};
  // m=1, k=1, b=2, R=1, A=3, eps=1/2: 2 A eps = 3, R A eps = 3/2.
  SystemModel sys = SystemModel::FromStrings(
      {"x2", "-(x1 - 1) - x3^2/3 - 2*x2", "-x1*x3/1.5"},
      {{"0"}, {"0"}, {"1"}}, box, "microactuator");

  Matrix m = Matrix::Zero(3, 3);
  m << 1.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0;
  const MetricField primal = MetricField::Constant(m, 0.5, MetricRole::kPrimal);
  std::map<std::string, MetricField> metrics{
      {"primal", primal},
      {"dual", primal.InverseOfConstant()},
  };

  ReferenceSpec ref = ReferenceSpec::FromStrings(
      Vec({0.2, 0.0, 0.0}), {"0.5*abs(sin(t/5) + cos(t))"});
  Matrix k(1, 3);
  k << 0.0, 0.0, -2.0;
  GainField gain = GainField::Constant(k);

  Scenario sc{Vec({1.5, 1.0, 2.0}), Vec({1.5, 1.0, 2.0}), 1.0, 30.0, 1e-3,
              "static"};
  return Builtin{std::move(sys), std::move(metrics), std::move(ref),
                 std::move(gain), DampingParams{0.0, 0.0, 2.0}, std::move(sc)};
}

}  // namespace

const MetricField& Builtin::metric(const std::string& key) const {
  auto it = metrics.find(key);
  if (it == metrics.end()) {
    throw std::invalid_argument("builtin '" + system.name() +
                                "' has no metric '" + key + "'");
  }
  return it->second;
}

Builtin MakeBuiltin(std::string_view name) {
  if (name == "numex") return Numex();
  if (name == "microactuator") return Microactuator();
  throw std::invalid_argument("unknown builtin system '" + std::string(name) +
                              "'");
}

std::vector<std::string> BuiltinNames() { return {"numex", "microactuator"}; }

}  // namespace ccmtrack
