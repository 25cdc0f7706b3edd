#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "regbn/projection.hpp"
#include "support.hpp"

using namespace regbn;
using namespace testing_support;

TEST(Projection, MatchesNormalEquationSolve) {
  std::mt19937_64 gen(41);
  for (int k = 0; k < 200; ++k) {
    const std::size_t b = uniform_size(gen, 4, 64), m = uniform_size(gen, 2, 32), n = uniform_size(gen, 2, 32);
    const double lam = std::exp(std::uniform_real_distribution<>(std::log(1e-4), std::log(1e4))(gen));
    const Matrix f = random_matrix(gen, b, n), g = random_matrix(gen, b, m);
    const ProjectionInputs in = ProjectionInputs::make(f, g);
    const Matrix ref = ridge(f, g, lam);
    EXPECT_LE(fro(project_svd(in, lam) - ref), 1e-8 * fro(ref)) << "b=" << b << " m=" << m << " lambda=" << lam;
    EXPECT_LE(fro(project_direct(in, lam) - ref), 1e-8 * fro(ref));
  }
}

TEST(Projection, ResidualShapeAndIdentity) {
  std::mt19937_64 gen(42);
  for (int k = 0; k < 50; ++k) {
    const std::size_t b = uniform_size(gen, 4, 64), m = uniform_size(gen, 2, 32), n = uniform_size(gen, 2, 32);
    const double lam = std::exp(std::uniform_real_distribution<>(std::log(1e-2), std::log(1e4))(gen));
    const Matrix f = random_matrix(gen, b, n), g = random_matrix(gen, b, m);
    const ProjectionInputs in = ProjectionInputs::make(f, g);
    const Matrix w = project_svd(in, lam);
    const Matrix r = residual(in, w);
    ASSERT_TRUE(r.same_shape(f));
    // gᵀ r = λ W
    const Matrix lhs = naive_matmul(naive_transpose(g), r);
    EXPECT_LE(fro(lhs - lam * w), 1e-8 * fro(lam * w));
  }
}

TEST(Projection, ZeroColumnsInGDoNotChangeTheFit) {
  std::mt19937_64 gen(43);
  for (int k = 0; k < 30; ++k) {
    const std::size_t b = uniform_size(gen, 4, 40), m = uniform_size(gen, 2, 10), n = uniform_size(gen, 2, 10);
    const Matrix f = random_matrix(gen, b, n), g = random_matrix(gen, b, m);
    Matrix g_pad(b, m + 3);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < m; ++j) g_pad(i, j) = g(i, j);
    const double lam = 0.7;
    const Matrix fit = naive_matmul(g, project_svd(ProjectionInputs::make(f, g), lam));
    const Matrix fit_pad = naive_matmul(g_pad, project_svd(ProjectionInputs::make(f, g_pad), lam));
    EXPECT_LE(max_abs_diff(fit, fit_pad), 1e-10);
  }
}

TEST(Projection, ZeroModalityGivesZeroWeights) {
  std::mt19937_64 gen(44);
  const Matrix f = random_matrix(gen, 10, 4);
  const ProjectionInputs in = ProjectionInputs::make(f, Matrix(10, 3));
  const Matrix w = project_svd(in, 1.0);
  EXPECT_EQ(w, Matrix(3, 4));
  EXPECT_EQ(residual(in, w), f);
}

TEST(Projection, WideBatchIsRegularized) {
  // Fewer rows than metadata columns: gᵀg is singular, the ridge term keeps it solvable.
  std::mt19937_64 gen(45);
  const Matrix f = random_matrix(gen, 5, 6), g = random_matrix(gen, 5, 12);
  const Matrix ref = ridge(f, g, 0.3);
  EXPECT_LE(fro(project_svd(ProjectionInputs::make(f, g), 0.3) - ref), 1e-9 * fro(ref));
}

TEST(Projection, InputValidation) {
  EXPECT_THROW(ProjectionInputs::make(Matrix(4, 2), Matrix(5, 2)), DimensionError);
  EXPECT_THROW(ProjectionInputs::make(Matrix(1, 2), Matrix(1, 2)), DimensionError);
  EXPECT_THROW(ProjectionInputs::make(Matrix(4, 0), Matrix(4, 2)), DimensionError);
  Matrix bad(4, 2);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(ProjectionInputs::make(bad, Matrix(4, 2)), NumericalError);
  const ProjectionInputs in = ProjectionInputs::make(Matrix(4, 2, 1.0), Matrix(4, 2, 1.0));
  EXPECT_THROW(project_svd(in, 0.0), Error);
  EXPECT_THROW(project_svd(in, -1.0), Error);
  EXPECT_THROW(residual(Matrix(4, 2), Matrix(4, 3), Matrix(2, 2)), DimensionError);
}
