#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "ccmtrack/numerics.h"

namespace {

using namespace ccmtrack;

Matrix M2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Matrix RandomSymmetric(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  }
  return Sym(a);
}

TEST(SymEig, MicroactuatorReducedForm) {
  const EigenDecomposition e = SymEig(M2(-2, -4, -4, -10));
  EXPECT_NEAR(e.values(0), -6.0 - 4.0 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(e.values(1), -6.0 + 4.0 * std::sqrt(2.0), 1e-12);
}

TEST(SymEig, IdentityAndDiagonal) {
  const EigenDecomposition id = SymEig(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(id.values(i), 1.0);
  const EigenDecomposition d = SymEig(M2(5, 0, 0, -3));
  EXPECT_DOUBLE_EQ(d.values(0), -3.0);
  EXPECT_DOUBLE_EQ(d.values(1), 5.0);
}

TEST(SymEig, RejectsAsymmetricInput) {
  EXPECT_THROW(SymEig(M2(1, 2, 0, 1)), NotSymmetricError);
}

TEST(SymEig, AgreesWithEigenAndReconstructs) {
  std::mt19937_64 rng(5);
  for (int n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = RandomSymmetric(rng, n);
      const EigenDecomposition e = SymEig(a);
      Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
      for (int i = 0; i < n; ++i) {
        EXPECT_NEAR(e.values(i), ref.eigenvalues()(i), 1e-10);
      }
      const Matrix rebuilt =
          e.vectors * e.values.asDiagonal() * e.vectors.transpose();
      EXPECT_LT(MaxAbs(rebuilt - a), 1e-10);
      EXPECT_LT(MaxAbs(e.vectors.transpose() * e.vectors -
                       Matrix::Identity(n, n)),
                1e-10);
    }
  }
}

TEST(SymEig, TraceAndDeterminantIdentities) {
  std::mt19937_64 rng(17);
  for (int n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < 25; ++trial) {
      const Matrix a = RandomSymmetric(rng, n);
      const EigenDecomposition e = SymEig(a);
      const double trace = a.trace();
      const double det = a.determinant();
      EXPECT_NEAR(e.values.sum(), trace,
                  1e-8 * std::max(1.0, e.values.cwiseAbs().sum()));
      EXPECT_NEAR(e.values.prod(), det,
                  1e-8 * std::max(1.0, e.values.cwiseAbs().prod()));
    }
  }
}

TEST(GeneralizedSymEig, MatchesReducedProblem) {
  const Matrix a = M2(1, 2, 2, -1);
  const Matrix b = M2(2, 0.5, 0.5, 1);
  const EigenDecomposition e = GeneralizedSymEig(a, b);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ref(a, b);
  EXPECT_NEAR(e.values(0), ref.eigenvalues()(0), 1e-12);
  EXPECT_NEAR(e.values(1), ref.eigenvalues()(1), 1e-12);
  EXPECT_LT(MaxAbs(e.vectors.transpose() * b * e.vectors - Matrix::Identity(2, 2)),
            1e-12);
  EXPECT_THROW(GeneralizedSymEig(a, M2(1, 0, 0, -1)), NotPositiveDefiniteError);
}

TEST(Inverse, DualMatrixOfPlanarExample) {
  const Matrix inv = Inverse(M2(3, -1, -1, 2));
  EXPECT_LT(MaxAbs(inv - M2(2, 1, 1, 3) / 5.0), 1e-15);
}

TEST(Inverse, IdentityAndSingular) {
  EXPECT_LT(MaxAbs(Inverse(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)),
            1e-15);
  EXPECT_THROW(Inverse(M2(1, 1, 1, 1)), SingularMatrixError);
}

TEST(NullSpace, AnnihilatorOfPlanarInputDirection) {
  Matrix a(1, 2);
  a << 1.0 / 5.0, 3.0 / 5.0;
  const Matrix n = NullSpaceBasis(a);
  ASSERT_EQ(n.cols(), 1);
  Vector expected(2);
  expected << 3.0, -1.0;
  expected /= std::sqrt(10.0);
  const double sign = n(0, 0) > 0 ? 1.0 : -1.0;
  EXPECT_LT((sign * n.col(0) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NullSpace, PlaneAndEmpty) {
  Matrix a(1, 3);
  a << 0, 0, 1;
  const Matrix n = NullSpaceBasis(a);
  ASSERT_EQ(n.cols(), 2);
  EXPECT_LT(n.row(2).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(NullSpaceBasis(Matrix::Identity(2, 2)).cols(), 0);
}

TEST(NullSpace, OrthonormalAndRankNullity) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    const int rows = 1 + trial % n;
    const int rank = 1 + trial % rows;
    Matrix left(rows, rank), right(rank, n);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rank; ++j) left(i, j) = g(rng);
    for (int i = 0; i < rank; ++i)
      for (int j = 0; j < n; ++j) right(i, j) = g(rng);
    const Matrix a = left * right;
    const Matrix basis = NullSpaceBasis(a);
    EXPECT_EQ(rank + basis.cols(), n);
    EXPECT_LT(MaxAbs(basis.transpose() * basis -
                     Matrix::Identity(basis.cols(), basis.cols())),
              1e-10);
    if (basis.cols() > 0) EXPECT_LT(MaxAbs(a * basis), 1e-10);
  }
}

TEST(SpectralNorm, Examples) {
  EXPECT_DOUBLE_EQ(SpectralNorm(M2(3, 0, 0, -7)), 7.0);
  EXPECT_EQ(SpectralNorm(Matrix::Zero(3, 3)), 0.0);
  // Symmetric 2x2: singular values are |eigenvalues| = |(-4 +- sqrt(20)) / 2| / 5.
  const double expected = (2.0 + std::sqrt(5.0)) / 5.0;
  EXPECT_NEAR(SpectralNorm(M2(0, 1, 1, -4) / 5.0), expected, 1e-14);
}

TEST(Rk4, Examples) {
  Vector one(1);
  one << 1.0;
  const auto decay = [](double, const Vector& x) -> Vector { return -x; };
  EXPECT_NEAR(Rk4Step(decay, one, 0.0, 0.1)(0), std::exp(-0.1), 1e-6);

  const auto still = [](double, const Vector& x) -> Vector {
    return Vector::Zero(x.size());
  };
  EXPECT_EQ(Rk4Step(still, one, 0.0, 0.3)(0), 1.0);

  Vector zero = Vector::Zero(1);
  const auto unit = [](double, const Vector&) -> Vector {
    return Vector::Ones(1);
  };
  EXPECT_EQ(Rk4Step(unit, zero, 0.0, 0.5)(0), 0.5);
}

TEST(Rk4, NonFiniteDerivativeCarriesTime) {
  Vector one(1);
  one << 1.0;
  const auto bad = [](double t, const Vector& x) -> Vector {
    return t > 0.6 ? Vector::Constant(1, NAN) : Vector(-x);
  };
  try {
    Rk4Step(bad, one, 0.5, 0.2);
    FAIL() << "expected a numerical failure";
  } catch (const NumericalFailure& e) {
    EXPECT_DOUBLE_EQ(e.time(), 0.7);
  }
}

double Rk4GlobalError(double h) {
  Vector x(1);
  x << 1.0;
  const int steps = static_cast<int>(std::lround(1.0 / h));
  const auto decay = [](double, const Vector& v) -> Vector { return -v; };
  for (int k = 0; k < steps; ++k) x = Rk4Step(decay, x, k * h, h);
  return std::abs(x(0) - std::exp(-1.0));
}

TEST(Rk4, FourthOrderConvergence) {
  for (double h : {0.1, 0.05, 0.025}) {
    const double factor = Rk4GlobalError(h) / Rk4GlobalError(h / 2.0);
    EXPECT_GE(factor, 12.0) << "h=" << h;
    EXPECT_LE(factor, 20.0) << "h=" << h;
  }
}

TEST(Rk45, ExponentialDecay) {
  Vector x0(1);
  x0 << 1.0;
  const DenseTrace trace = Rk45Integrate(
      [](double, const Vector& x) -> Vector { return -x; }, x0, 0.0, 1.0,
      1e-12, 1e-14);
  EXPECT_DOUBLE_EQ(trace.t.back(), 1.0);
  EXPECT_NEAR(trace.x.back()(0), std::exp(-1.0), 1e-9);
}

TEST(Rk45, OscillatorEnergyDrift) {
  Vector x0(2);
  x0 << 1.0, 0.0;
  const double period = 2.0 * std::numbers::pi;
  const DenseTrace trace = Rk45Integrate(
      [](double, const Vector& x) -> Vector {
        Vector d(2);
        d << x(1), -x(0);
        return d;
      },
      x0, 0.0, 100.0 * period, 1e-10, 1e-12);
  double drift = 0.0;
  for (const Vector& x : trace.x) {
    drift = std::max(drift, std::abs(0.5 * x.squaredNorm() - 0.5));
  }
  EXPECT_LE(drift, 1e-7);
}

TEST(Rk45, HitsRequestedOutputTimes) {
  Vector x0(1);
  x0 << 2.0;
  const std::vector<double> outputs{0.25, 0.5, 0.75};
  const DenseTrace trace = Rk45Integrate(
      [](double, const Vector& x) -> Vector { return -x; }, x0, 0.0, 1.0,
      1e-10, 1e-12, outputs);
  for (double t : outputs) {
    EXPECT_NEAR(trace.At(t)(0), 2.0 * std::exp(-t), 1e-9);
  }
}

TEST(Rk45, ZeroFieldIsConstant) {
  Vector x0(2);
  x0 << 1.5, -2.0;
  const DenseTrace trace = Rk45Integrate(
      [](double, const Vector& x) -> Vector { return Vector::Zero(x.size()); },
      x0, 0.0, 3.0, 1e-8, 1e-10);
  for (const Vector& x : trace.x) EXPECT_EQ((x - x0).norm(), 0.0);
}

TEST(Rk45, StiffnessAndToleranceErrors) {
  Vector x0(1);
  x0 << 1.0;
  const auto blowup = [](double, const Vector& x) -> Vector {
    return x.array().square();
  };
  EXPECT_THROW(Rk45Integrate(blowup, x0, 0.0, 2.0, 1e-8, 1e-10),
               NumericalFailure);
  const auto decay = [](double, const Vector& x) -> Vector { return -x; };
  EXPECT_THROW(Rk45Integrate(decay, x0, 0.0, 1.0, 1e-13, 1e-14),
               std::invalid_argument);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const QuadratureRule& rule = GaussLegendre(32);
  ASSERT_EQ(rule.nodes.size(), 32u);
  for (int degree = 0; degree <= 63; ++degree) {
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      sum += rule.weights[i] * std::pow(rule.nodes[i], degree);
    }
    const double exact = degree % 2 == 1 ? 0.0 : 2.0 / (degree + 1);
    EXPECT_NEAR(sum, exact, 1e-13) << "degree " << degree;
  }
}

}  // namespace
