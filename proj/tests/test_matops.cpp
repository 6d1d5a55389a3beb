#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fpg/matops.hpp"
#include "support.hpp"

namespace {

using fpg::Matrix;
using fpg::testing::random_matrix;
using fpg::testing::random_spd;

// Oracle: X <- F X F^T + Q until the increment vanishes.
Matrix fixed_point_lyapunov(const Matrix& F, const Matrix& Q) {
  Matrix X = Q;
  Matrix term = Q;
  for (int k = 0; k < 200000; ++k) {
    term = F * term * F.transpose();
    X += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * (1.0 + X.cwiseAbs().maxCoeff())) break;
  }
  return X;
}

Matrix stable_matrix(std::mt19937_64& rng, Eigen::Index n, double rho) {
  Matrix F = random_matrix(rng, n, n);
  return F * (rho / fpg::spectral_radius(F));
}

TEST(Matops, ScalarLyapunov) {
  const Matrix F = Matrix::Constant(1, 1, 0.5);
  const Matrix Q = Matrix::Constant(1, 1, 1.0);
  EXPECT_NEAR(fpg::solve_discrete_lyapunov(F, Q)(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(Matops, ZeroDynamicsReturnsQ) {
  std::mt19937_64 rng(1);
  const Matrix Q = random_spd(rng, 3);
  EXPECT_LT((fpg::solve_discrete_lyapunov(Matrix::Zero(3, 3), Q) - Q).norm(), 1e-14);
}

TEST(Matops, RightAndLeftFormsSatisfyTheirEquations) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = fpg::testing::random_dim(rng, 1, 5);
    const Matrix F = stable_matrix(rng, n, 0.95);
    const Matrix Q = random_spd(rng, n);
    const Matrix X = fpg::solve_discrete_lyapunov(F, Q, fpg::LyapunovForm::right);
    const Matrix Y = fpg::solve_discrete_lyapunov(F, Q, fpg::LyapunovForm::left);
    EXPECT_LT((X - F * X * F.transpose() - Q).norm(), 1e-10);
    EXPECT_LT((Y - F.transpose() * Y * F - Q).norm(), 1e-10);
    EXPECT_TRUE(fpg::is_symmetric(X));
    EXPECT_GT(fpg::min_eigenvalue(X), 0.0);
  }
}

TEST(Matops, MatchesFixedPointOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = fpg::testing::random_dim(rng, 1, 4);
    const Matrix F = stable_matrix(rng, n, 0.9);
    const Matrix Q = random_spd(rng, n);
    const Matrix X = fpg::solve_discrete_lyapunov(F, Q);
    const Matrix oracle = fixed_point_lyapunov(F, Q);
    EXPECT_LT((X - oracle).norm(), 1e-8 * (1.0 + oracle.norm()));
  }
}

TEST(Matops, RejectsUnstableAndAsymmetric) {
  const Matrix F = Matrix::Constant(1, 1, 1.0);
  const Matrix Q = Matrix::Identity(1, 1);
  EXPECT_THROW(fpg::solve_discrete_lyapunov(F, Q), fpg::InstabilityError);
  Matrix A(2, 2);
  A << 0.1, 0.0, 0.0, 0.2;
  Matrix Qa(2, 2);
  Qa << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(fpg::solve_discrete_lyapunov(A, Qa), fpg::InputError);
  EXPECT_THROW(fpg::solve_discrete_lyapunov(Matrix::Zero(2, 3), Q), fpg::DimensionError);
}

TEST(Matops, SpectralRadius) {
  Matrix R(2, 2);
  R << 0.0, -1.0, 1.0, 0.0;  // rotation, eigenvalues +-i
  EXPECT_NEAR(fpg::spectral_radius(R), 1.0, 1e-14);
  EXPECT_NEAR(fpg::spectral_radius(Matrix::Constant(1, 1, -0.7)), 0.7, 1e-15);
  Matrix J(2, 2);
  J << 0.5, 10.0, 0.0, 0.5;
  EXPECT_NEAR(fpg::spectral_radius(J), 0.5, 1e-12);
}

TEST(Matops, Stabilizing) {
  const Matrix A = Matrix::Constant(1, 1, 2.0);
  const Matrix B = Matrix::Constant(1, 1, 1.0);
  EXPECT_TRUE(fpg::is_stabilizing(A, B, Matrix::Constant(1, 1, -1.5)));
  EXPECT_FALSE(fpg::is_stabilizing(A, B, Matrix::Constant(1, 1, 0.0)));
  EXPECT_FALSE(fpg::is_stabilizing(A, B, Matrix::Constant(1, 1, -1.0)));
}

TEST(Matops, Norms) {
  Matrix M(2, 2);
  M << 3.0, 0.0, 0.0, 4.0;
  EXPECT_NEAR(fpg::spectral_norm(M), 4.0, 1e-14);
  EXPECT_NEAR(fpg::frobenius_norm(M), 5.0, 1e-14);
  EXPECT_NEAR(fpg::trace(M), 7.0, 0.0);
  const Matrix K = fpg::kron(Matrix::Identity(2, 2), M);
  EXPECT_EQ(K.rows(), 4);
  EXPECT_DOUBLE_EQ(K(3, 3), 4.0);
  EXPECT_DOUBLE_EQ(K(0, 2), 0.0);
}

}  // namespace
