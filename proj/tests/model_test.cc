#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ccmtrack/builtins.h"
#include "ccmtrack/model.h"
#include "oracles.h"

namespace {

using namespace ccmtrack;

Vector V(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Box MakeBox(Vector lo, Vector hi) { return Box{std::move(lo), std::move(hi)}; }

TEST(SystemModel, PlanarJacobian) {
  const Builtin b = MakeBuiltin("numex");
  Matrix expected(2, 2);
  expected << 0, 5, 0, -1;
  EXPECT_LT(MaxAbs(b.system.JacF(V({0.7, 2.0})) - expected), 1e-14);
}

TEST(SystemModel, MicroactuatorJacobian) {
  const Builtin b = MakeBuiltin("microactuator");
  Matrix expected(3, 3);
  expected << 0, 1, 0, -1, -2, 0, 0, 0, -2.0 / 3.0;
  EXPECT_LT(MaxAbs(b.system.JacF(V({1.0, 0.0, 0.0})) - expected), 1e-14);
}

TEST(SystemModel, LinearSystemHasConstantJacobian) {
  const SystemModel sys = SystemModel::FromStrings(
      {"2*x1 - x2", "x1 + 3*x2"}, {{"0"}, {"1"}},
      MakeBox(V({-1, -1}), V({1, 1})));
  Matrix a(2, 2);
  a << 2, -1, 1, 3;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 5; ++i) {
    EXPECT_LT(MaxAbs(sys.JacF(V({u(rng), u(rng)})) - a), 1e-15);
  }
}

TEST(SystemModel, AMatrixWithConstantInputMatrix) {
  for (const std::string& name : BuiltinNames()) {
    const Builtin b = MakeBuiltin(name);
    const Vector x = b.system.domain().Center();
    const Vector u = Vector::Constant(b.system.m(), 0.37);
    EXPECT_TRUE(b.system.has_constant_b());
    EXPECT_LT(MaxAbs(b.system.AMatrix(x, u) - b.system.JacF(x)), 1e-15) << name;
  }
}

TEST(SystemModel, AMatrixIncludesInputMatrixJacobian) {
  const SystemModel sys = SystemModel::FromStrings(
      {"-x1", "-x2"}, {{"0"}, {"x1"}}, MakeBox(V({1, -1}), V({2, 1})));
  EXPECT_FALSE(sys.has_constant_b());
  const Vector x = V({1.5, 0.2});
  const Vector u = V({3.0});
  Matrix expected(2, 2);
  expected << -1, 0, 3, -1;
  EXPECT_LT(MaxAbs(sys.AMatrix(x, u) - expected), 1e-15);
  Matrix jb(2, 2);
  jb << 0, 0, 1, 0;
  EXPECT_LT(MaxAbs(sys.JacBColumn(x, 0) - jb), 1e-15);
}

TEST(SystemModel, BuiltinJacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (const std::string& name : BuiltinNames()) {
    const SystemModel& sys = MakeBuiltin(name).system;
    const Box& box = sys.domain();
    for (int trial = 0; trial < 50; ++trial) {
      Vector x(sys.n());
      for (int i = 0; i < sys.n(); ++i) {
        x(i) = std::uniform_real_distribution<double>(box.lo(i), box.hi(i))(rng);
      }
      const Matrix jac = sys.JacF(x);
      for (int j = 0; j < sys.n(); ++j) {
        for (int i = 0; i < sys.n(); ++i) {
          const double fd = oracle::CentralDifference(
              [&](double s) {
                Vector y = x;
                y(j) = s;
                return sys.EvalF(y)(i);
              },
              x(j));
          EXPECT_NEAR(jac(i, j), fd, 1e-5 * std::max(1.0, std::abs(fd)))
              << name << " (" << i << "," << j << ")";
        }
      }
    }
  }
}

TEST(SystemModel, RejectsInconsistentDefinitions) {
  const Box box2 = MakeBox(V({-1, -1}), V({1, 1}));
  EXPECT_THROW(SystemModel::FromStrings({"x1", "x2"}, {{"1", "0"}, {"0", "1"}}, box2),
               ModelError);
  EXPECT_THROW(SystemModel::FromStrings({"x1", "x2"}, {{"0"}}, box2), ModelError);
  EXPECT_THROW(SystemModel::FromStrings({"x1", "x2"}, {{"0"}, {"0"}}, box2),
               ModelError);
  EXPECT_THROW(SystemModel::FromStrings({"x1", "x3"}, {{"0"}, {"1"}}, box2),
               expr::ParseError);
}

TEST(MetricField, DirectionalDerivative) {
  const expr::VarTable vars = SystemModel::StateVars(2);
  const MetricField constant =
      MetricField::Constant(Matrix::Identity(2, 2) * 2.0, 0.0, MetricRole::kPrimal);
  EXPECT_EQ(MaxAbs(constant.DirDeriv(V({1, 2}), V({3, -1}))), 0.0);

  const MetricField curved({{expr::Parse("x1^2 + 1", vars), expr::Parse("0", vars)},
                            {expr::Parse("0", vars), expr::Parse("1", vars)}},
                           1.0, 10.0, 0.0, MetricRole::kPrimal);
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 4.0;
  EXPECT_LT(MaxAbs(curved.DirDeriv(V({2, 0}), V({1, 0})) - expected), 1e-15);
  EXPECT_FALSE(curved.is_constant());
  EXPECT_THROW(curved.InverseOfConstant(), ModelError);
}

TEST(MetricField, UpperTriangleIsMirrored) {
  const expr::VarTable vars = SystemModel::StateVars(2);
  const MetricField m({{expr::Parse("2", vars), expr::Parse("x1", vars)},
                       {expr::Parse("1000", vars), expr::Parse("3", vars)}},
                      0.1, 10.0, 0.0, MetricRole::kPrimal);
  const Matrix value = m.Eval(V({0.5, 0.0}));
  EXPECT_EQ(value(1, 0), 0.5);
  EXPECT_EQ(value(0, 1), 0.5);
}

TEST(MetricField, BuiltinPairsAreInverses) {
  const Builtin numex = MakeBuiltin("numex");
  const Vector x = Vector::Zero(2);
  const Matrix primal = numex.metric("primal").Eval(x);
  const Matrix dual = numex.metric("dual").Eval(x);
  EXPECT_EQ(numex.metric("primal").role(), MetricRole::kPrimal);
  EXPECT_EQ(numex.metric("dual").role(), MetricRole::kDual);
  EXPECT_LT(MaxAbs(primal * dual - Matrix::Identity(2, 2)), 1e-15);
  Matrix w(2, 2);
  w << 3, -1, -1, 2;
  EXPECT_EQ(MaxAbs(dual - w), 0.0);

  const Builtin micro = MakeBuiltin("microactuator");
  Matrix m(3, 3);
  m << 1, 1, 0, 1, 3, 0, 0, 0, 1;
  EXPECT_EQ(MaxAbs(micro.metric().Eval(Vector::Zero(3)) - m), 0.0);
  Matrix expected_inverse(3, 3);
  expected_inverse << 1.5, -0.5, 0, -0.5, 0.5, 0, 0, 0, 1;
  EXPECT_LT(MaxAbs(micro.metric("dual").Eval(Vector::Zero(3)) - expected_inverse),
            1e-15);
}

TEST(Reference, InitialDerivative) {
  const Builtin b = MakeBuiltin("numex");
  const Vector xd0 = b.reference.xd0;
  const Vector ud = b.reference.EvalUd(0.0, xd0);
  const Vector xdot = b.system.Dynamics(xd0, ud);
  EXPECT_NEAR(xdot(0), -4.0 / 3.0, 1e-15);
  EXPECT_NEAR(xdot(1), -2.0, 1e-15);
}

TEST(Reference, EquilibriumStaysPut) {
  const Builtin b = MakeBuiltin("numex");
  const ReferenceSpec ref = ReferenceSpec::FromStrings(Vector::Zero(2), {"0"});
  const ReferenceTrace trace = GenerateReference(b.system, ref, 5.0, 0.01);
  EXPECT_FALSE(trace.failure);
  for (const Vector& xd : trace.xd) EXPECT_EQ(xd.norm(), 0.0);
}

TEST(Reference, MicroactuatorMatchesAdaptiveOracle) {
  const Builtin b = MakeBuiltin("microactuator");
  const double h = 1e-3;
  const ReferenceTrace trace = GenerateReference(b.system, b.reference, 30.0, h);
  ASSERT_FALSE(trace.failure);
  EXPECT_NEAR(trace.t.back(), 30.0, 1e-9);
  // Physical range q in [0, 2], Q >= 0 is monitored, not enforced.
  std::size_t outside = 0;
  for (const Vector& xd : trace.xd) {
    if (!b.system.domain().Contains(xd)) ++outside;
  }
  EXPECT_EQ(outside, trace.domain_violations);
  if (trace.domain_violations > 0) EXPECT_GE(trace.first_violation_time, 0.0);

  const SystemModel& sys = b.system;
  const ReferenceSpec& ref = b.reference;
  std::vector<double> x0(ref.xd0.data(), ref.xd0.data() + ref.xd0.size());
  const std::vector<double> end = oracle::OdeintSolve(
      [&](const std::vector<double>& s, std::vector<double>& ds, double t) {
        const Vector xd = Eigen::Map<const Vector>(s.data(), 3);
        const Vector d = sys.Dynamics(xd, ref.EvalUd(t, xd));
        ds.assign(d.data(), d.data() + 3);
      },
      x0, 0.0, 30.0, 1e-10, 1e-12);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(trace.xd.back()(i), end[i], 1e-6);
}

TEST(Reference, DivergenceIsReportedWithTime) {
  const SystemModel sys = SystemModel::FromStrings(
      {"x1^2", "-x2"}, {{"0"}, {"1"}}, MakeBox(V({-1, -1}), V({1, 1})));
  const ReferenceSpec ref = ReferenceSpec::FromStrings(V({1.0, 0.0}), {"0"});
  const ReferenceTrace trace = GenerateReference(sys, ref, 2.0, 1e-3);
  ASSERT_TRUE(trace.failure);
  EXPECT_GT(trace.failure_time, 0.9);
  EXPECT_LT(trace.failure_time, 1.01);
}

}  // namespace
