#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ccmtrack/builtins.h"
#include "ccmtrack/expr.h"
#include "oracles.h"

namespace {

using namespace ccmtrack;
using namespace ccmtrack::expr;

double Eval1(const std::string& text, const VarTable& vars,
             const std::map<std::string, double>& env) {
  return Evaluate(Parse(text, vars), vars, env);
}

TEST(ExprParse, SquarePlusOne) {
  const VarTable vars = VarTable::Indexed("x", 2);
  EXPECT_DOUBLE_EQ(Eval1("x2^2 + 1", vars, {{"x1", 0.0}, {"x2", 2.0}}), 5.0);
}

TEST(ExprParse, IncompleteExpressionReportsOffset) {
  const VarTable vars = VarTable::Indexed("x", 1);
  try {
    Parse("x1 + ", vars);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
}

TEST(ExprParse, ReferenceInputExpression) {
  const VarTable vars({"t", "xd1"});
  EXPECT_DOUBLE_EQ(
      Eval1("sin(t) - cos(t)^2 * xd1", vars, {{"t", 0.0}, {"xd1", 3.0}}), -3.0);
}

TEST(ExprParse, UnknownIdentifier) {
  const VarTable vars = VarTable::Indexed("x", 2);
  try {
    Parse("x1 + y", vars);
    FAIL() << "expected an unknown identifier error";
  } catch (const UnknownIdentifierError& e) {
    EXPECT_EQ(e.name(), "y");
    EXPECT_EQ(e.offset(), 5u);
  }
}

TEST(ExprParse, ImplicitMultiplicationRejected) {
  const VarTable vars = VarTable::Indexed("x", 1);
  EXPECT_THROW(Parse("2x1", vars), ParseError);
}

TEST(ExprParse, Precedence) {
  const VarTable vars = VarTable::Indexed("x", 2);
  const std::map<std::string, double> env{{"x1", 3.0}, {"x2", 2.0}};
  EXPECT_DOUBLE_EQ(Eval1("1 + 2 * 3", vars, env), 7.0);
  EXPECT_DOUBLE_EQ(Eval1("-x2^2", vars, env), -4.0);
  EXPECT_DOUBLE_EQ(Eval1("2^-1", vars, env), 0.5);
  EXPECT_DOUBLE_EQ(Eval1("x1 - x2 - 1", vars, env), 0.0);
  EXPECT_DOUBLE_EQ(Eval1("x1 / x2 / 3", vars, env), 0.5);
  EXPECT_DOUBLE_EQ(Eval1("(1/3)*x1^3", vars, env), 9.0);
}

TEST(ExprEval, CubicTerm) {
  const VarTable vars = VarTable::Indexed("x", 2);
  EXPECT_DOUBLE_EQ(Eval1("(1/3)*x2^3", vars, {{"x1", 0.0}, {"x2", 3.0}}), 9.0);
}

TEST(ExprEval, DivisionByZeroIsDomainError) {
  const VarTable vars = VarTable::Indexed("x", 1);
  EXPECT_THROW(Eval1("1/x1", vars, {{"x1", 0.0}}), DomainError);
}

TEST(ExprEval, SqrtOfNegativeIsDomainError) {
  const VarTable vars = VarTable::Indexed("x", 1);
  EXPECT_THROW(Eval1("sqrt(x1)", vars, {{"x1", -1.0}}), DomainError);
}

TEST(ExprEval, UnboundVariableIsDomainError) {
  const VarTable vars = VarTable::Indexed("x", 2);
  EXPECT_THROW(Eval1("x1 + x2", vars, {{"x1", 0.0}}), DomainError);
}

TEST(ExprEval, AbsoluteValueInput) {
  const VarTable vars({"t"});
  EXPECT_DOUBLE_EQ(Eval1("abs(sin(t/5)+cos(t))*0.5", vars, {{"t", 0.0}}), 0.5);
}

TEST(ExprDiff, CubicGivesSquare) {
  const VarTable vars = VarTable::Indexed("x", 2);
  const Expr d = Differentiate(Parse("(1/3)*x2^3", vars), vars, "x2");
  for (double x2 : {-2.5, -1.0, 0.0, 0.5, 3.0}) {
    EXPECT_NEAR(Evaluate(d, vars, {{"x1", 1.0}, {"x2", x2}}), x2 * x2, 1e-14);
  }
}

TEST(ExprDiff, IndependentVariableGivesZero) {
  const VarTable vars = VarTable::Indexed("x", 2);
  const Expr d = Differentiate(Parse("x2^2", vars), vars, "x1");
  EXPECT_TRUE(d.is_constant());
  EXPECT_EQ(d.value(), 0.0);
}

TEST(ExprDiff, NegatedQuadraticMatchesFiniteDifference) {
  const VarTable vars = VarTable::Indexed("x", 2);
  const Expr e = Parse("-(x2^2+1)", vars);
  const Expr d = Differentiate(e, vars, "x2");
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 10; ++i) {
    const double x1 = u(rng);
    const double x2 = u(rng);
    const double fd = oracle::CentralDifference(
        [&](double s) { return Evaluate(e, vars, {{"x1", x1}, {"x2", s}}); }, x2);
    EXPECT_NEAR(Evaluate(d, vars, {{"x1", x1}, {"x2", x2}}), fd, 1e-6);
    EXPECT_NEAR(Evaluate(d, vars, {{"x1", x1}, {"x2", x2}}), -2.0 * x2, 1e-12);
  }
}

TEST(ExprDiff, AbsUsesSignWithZeroAtOrigin) {
  const VarTable vars = VarTable::Indexed("x", 1);
  const Expr d = Differentiate(Parse("abs(x1)", vars), 0);
  EXPECT_EQ(Evaluate(d, vars, {{"x1", 0.0}}), 0.0);
  EXPECT_EQ(Evaluate(d, vars, {{"x1", -2.0}}), -1.0);
  EXPECT_EQ(Evaluate(d, vars, {{"x1", 3.0}}), 1.0);
}

// Symbolic derivative against central differences at one point.
void ExpectDerivativesMatch(const Expr& e, std::vector<double> point,
                            const std::string& label) {
  for (std::size_t k = 0; k < point.size(); ++k) {
    const Expr d = Differentiate(e, static_cast<int>(k));
    const double sym = d.Evaluate(point);
    const double fd = oracle::CentralDifference(
        [&](double s) {
          std::vector<double> p = point;
          p[k] = s;
          return e.Evaluate(p);
        },
        point[k]);
    EXPECT_NEAR(sym, fd, 1e-5 * std::max(1.0, std::abs(sym)))
        << label << " d/dslot" << k << " of " << e.ToString();
  }
}

TEST(ExprProperty, BuiltinExpressionsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (const std::string& name : BuiltinNames()) {
    const Builtin b = MakeBuiltin(name);
    const SystemModel& sys = b.system;
    std::vector<Expr> exprs = sys.f_exprs();
    for (int i = 0; i < sys.n(); ++i) {
      for (int j = 0; j < sys.m(); ++j) exprs.push_back(sys.b_expr(i, j));
    }
    for (const auto& [key, metric] : b.metrics) {
      for (int i = 0; i < sys.n(); ++i) {
        for (int j = 0; j < sys.n(); ++j) exprs.push_back(metric.entry(i, j));
      }
    }
    for (const auto& row : b.gain.entries()) {
      exprs.insert(exprs.end(), row.begin(), row.end());
    }
    const Box& box = sys.domain();
    for (const Expr& e : exprs) {
      for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> p(sys.n());
        for (int i = 0; i < sys.n(); ++i) {
          p[i] = std::uniform_real_distribution<double>(box.lo(i), box.hi(i))(rng);
        }
        ExpectDerivativesMatch(e, p, name);
      }
    }
    // Reference inputs over {t, xd1..xdn}; abs() kinks have measure zero.
    for (const Expr& e : b.reference.ud) {
      for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> p(sys.n() + 1);
        p[0] = std::uniform_real_distribution<double>(0.0, 30.0)(rng);
        for (int i = 0; i < sys.n(); ++i) {
          p[i + 1] =
              std::uniform_real_distribution<double>(box.lo(i), box.hi(i))(rng);
        }
        ExpectDerivativesMatch(e, p, name + " reference");
      }
    }
  }
}

TEST(ExprProperty, RandomExpressionsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    const Expr e = oracle::RandomSmoothExpr(rng, 3, 4);
    std::vector<double> p{coord(rng), coord(rng), coord(rng)};
    ExpectDerivativesMatch(e, p, "random #" + std::to_string(i));
  }
}

TEST(ExprProperty, PrintParseRoundTrip) {
  const VarTable vars = VarTable::Indexed("x", 3);
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const Expr e = oracle::RandomSmoothExpr(rng, 3, 5);
    const Expr reparsed = Parse(e.ToString(), vars);
    EXPECT_TRUE(reparsed.StructurallyEquals(e)) << e.ToString();
    EXPECT_EQ(Parse(reparsed.ToString(), vars).ToString(), reparsed.ToString());
  }
  for (const char* text :
       {"-x1^2", "(-x1)^2", "x1 - (x2 - x3)", "x1 / (x2 * x3)", "2^-3",
        "sign(x1) * abs(x2)", "-(1/3)*x2^3 + x2", "x1 - -2"}) {
    const Expr e = Parse(text, vars);
    EXPECT_TRUE(Parse(e.ToString(), vars).StructurallyEquals(e)) << text;
  }
}

TEST(ExprVarTable, ConcatRejectsDuplicates) {
  const VarTable a = VarTable::Indexed("x", 2);
  EXPECT_EQ(a.Concat(VarTable({"t"})).size(), 3);
  EXPECT_THROW(a.Concat(VarTable({"x1"})), std::invalid_argument);
}

}  // namespace
