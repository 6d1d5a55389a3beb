#ifndef FPG_MATOPS_HPP
#define FPG_MATOPS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "fpg/errors.hpp"

namespace fpg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Strictness margin used by is_stabilizing: rho(A+BK) < 1 - kStabilityMargin.
inline constexpr double kStabilityMargin = 1e-9;

/// Tolerance on |Q - Q^T| accepted by the Lyapunov solver.
inline constexpr double kSymmetryTolerance = 1e-8;

enum class LyapunovForm {
  right,  ///< X = F X F^T + Q
  left,   ///< X = F^T X F + Q
};

inline std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_square(const Matrix& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(who) + ": expected a nonempty square matrix, got " +
                         shape_of(m));
  }
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                          const char* who) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(who) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + shape_of(m));
  }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline bool is_symmetric(const Matrix& m, double tol = kSymmetryTolerance) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Smallest eigenvalue of the symmetric part of `m`.
inline double min_eigenvalue(const Matrix& m) {
  require_square(m, "min_eigenvalue");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Largest eigenvalue of the symmetric part of `m`.
inline double max_eigenvalue(const Matrix& m) {
  require_square(m, "max_eigenvalue");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

inline bool is_psd(const Matrix& m, double tol = 1e-10) {
  return is_symmetric(m) && min_eigenvalue(m) >= -tol;
}

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

/// Operator 2-norm (largest singular value).
inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double trace(const Matrix& m) { return m.trace(); }

/// Kronecker product a (x) b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Largest eigenvalue modulus. Eigenvalues come from the real Schur form, so
/// complex pairs are resolved from their 2x2 blocks.
inline double spectral_radius(const Matrix& m) {
  require_square(m, "spectral_radius");
  if (!all_finite(m)) throw InputError("spectral_radius: non-finite entries");
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NoSolutionError("spectral_radius: Schur iteration did not converge");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves X = F X F^T + Q (right) or X = F^T X F + Q (left).
///
/// Uses the vectorised system (I - F (x) F) vec(X) = vec(Q) with one round of
/// iterative refinement; sized for the n <= 10 problems of this library.
/// The left form is the right form applied to F^T.
inline Matrix solve_discrete_lyapunov(const Matrix& F, const Matrix& Q,
                                      LyapunovForm form = LyapunovForm::right) {
  require_square(F, "solve_discrete_lyapunov(F)");
  require_shape(Q, F.rows(), F.rows(), "solve_discrete_lyapunov(Q)");
  if (!all_finite(F) || !all_finite(Q)) {
    throw InputError("solve_discrete_lyapunov: non-finite entries");
  }
  if (!is_symmetric(Q, kSymmetryTolerance)) {
    throw InputError("solve_discrete_lyapunov: Q is not symmetric");
  }
  if (form == LyapunovForm::left) {
    return solve_discrete_lyapunov(Matrix(F.transpose()), Q, LyapunovForm::right);
  }
  const double rho = spectral_radius(F);
  if (rho >= 1.0) {
    throw InstabilityError("solve_discrete_lyapunov: spectral radius " + std::to_string(rho) +
                           " >= 1");
  }
  const Eigen::Index n = F.rows();
  const Eigen::Index nn = n * n;
  const Matrix system = Matrix::Identity(nn, nn) - kron(F, F);
  const Eigen::PartialPivLU<Matrix> lu(system);

  const Vector rhs = Eigen::Map<const Vector>(Q.data(), nn);
  Vector x = lu.solve(rhs);
  const Vector residual = rhs - system * x;
  x += lu.solve(residual);

  const Matrix X = Eigen::Map<const Matrix>(x.data(), n, n);
  return symmetrize(X);
}

/// True iff rho(A + B K) < 1 - kStabilityMargin.
inline bool is_stabilizing(const Matrix& A, const Matrix& B, const Matrix& K) {
  require_square(A, "is_stabilizing(A)");
  if (B.rows() != A.rows()) {
    throw DimensionError("is_stabilizing: B has " + std::to_string(B.rows()) +
                         " rows, expected " + std::to_string(A.rows()));
  }
  require_shape(K, B.cols(), A.rows(), "is_stabilizing(K)");
  return spectral_radius(A + B * K) < 1.0 - kStabilityMargin;
}

}  // namespace fpg

#endif  // FPG_MATOPS_HPP
