#ifndef FPG_LQR_HPP
#define FPG_LQR_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "fpg/matops.hpp"

namespace fpg {

/// x_{k+1} = A x_k + B u_k + w_k,  w_k ~ N(0, W_w).
struct LinearSystem {
  Matrix A;
  Matrix B;
  Matrix W_w;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }

  void validate() const {
    require_square(A, "LinearSystem(A)");
    if (B.rows() != A.rows() || B.cols() == 0) {
      throw DimensionError("LinearSystem: B is " + shape_of(B) + ", A is " + shape_of(A));
    }
    require_shape(W_w, n(), n(), "LinearSystem(W_w)");
    if (!all_finite(A) || !all_finite(B) || !all_finite(W_w)) {
      throw InputError("LinearSystem: non-finite entries");
    }
    if (!is_psd(W_w)) throw InputError("LinearSystem: W_w must be symmetric PSD");
  }
};

/// Stage cost c(x,u) = x^T R_x x + u^T R_u u (no 1/2 factor; the 1/2 lives in q_value).
struct QuadraticCost {
  Matrix R_x;
  Matrix R_u;

  void validate(Eigen::Index n, Eigen::Index m) const {
    require_shape(R_x, n, n, "QuadraticCost(R_x)");
    require_shape(R_u, m, m, "QuadraticCost(R_u)");
    if (!is_symmetric(R_x) || min_eigenvalue(R_x) < -1e-10) {
      throw InputError("QuadraticCost: R_x must be symmetric PSD");
    }
    if (!is_symmetric(R_u) || min_eigenvalue(R_u) < 1e-10) {
      throw InputError("QuadraticCost: R_u must be symmetric PD");
    }
  }

  double stage(const Vector& x, const Vector& u) const {
    return x.dot(R_x * x) + u.dot(R_u * u);
  }
};

/// Linear-Gaussian policy u = K x + z, z ~ N(0, W_z).
struct GainPolicy {
  Matrix K;
  Matrix W_z;
};

/// Blocks of the quadratic Q-function
///   Q(x,u) = 1/2 [x;u]^T [[S_xx, S_ux^T],[S_ux, S_uu]] [x;u] - J.
struct QParams {
  Matrix S_xx;
  Matrix S_ux;
  Matrix S_uu;
  double J = 0.0;

  Matrix block() const {
    const Eigen::Index n = S_xx.rows();
    const Eigen::Index m = S_uu.rows();
    Matrix S(n + m, n + m);
    S.topLeftCorner(n, n) = S_xx;
    S.topRightCorner(n, m) = S_ux.transpose();
    S.bottomLeftCorner(m, n) = S_ux;
    S.bottomRightCorner(m, m) = S_uu;
    return S;
  }
};

struct ValueMatrix {
  Matrix P;
};

namespace detail {

inline void check_policy(const LinearSystem& sys, const Matrix& K, const char* who) {
  sys.validate();
  require_shape(K, sys.m(), sys.n(), who);
}

inline Matrix checked_closed_loop(const LinearSystem& sys, const Matrix& K, const char* who) {
  check_policy(sys, K, who);
  if (!is_stabilizing(sys.A, sys.B, K)) {
    throw InstabilityError(std::string(who) + ": K is not stabilizing (rho(A+BK) = " +
                           std::to_string(spectral_radius(sys.A + sys.B * K)) + ")");
  }
  return sys.A + sys.B * K;
}

}  // namespace detail

/// Stationary state covariance under u = Kx + z:
/// Sigma = (A+BK) Sigma (A+BK)^T + B W_z B^T + W_w.
inline Matrix steady_state_covariance(const LinearSystem& sys, const GainPolicy& pol) {
  const Matrix F = detail::checked_closed_loop(sys, pol.K, "steady_state_covariance");
  require_shape(pol.W_z, sys.m(), sys.m(), "steady_state_covariance(W_z)");
  const Matrix noise = symmetrize(sys.B * pol.W_z * sys.B.transpose() + sys.W_w);
  return solve_discrete_lyapunov(F, noise, LyapunovForm::right);
}

/// Policy value matrix: P = (R_x + K^T R_u K) + (A+BK)^T P (A+BK).
inline ValueMatrix policy_value(const LinearSystem& sys, const QuadraticCost& cost,
                                const Matrix& K) {
  const Matrix F = detail::checked_closed_loop(sys, K, "policy_value");
  cost.validate(sys.n(), sys.m());
  const Matrix stage = symmetrize(cost.R_x + K.transpose() * cost.R_u * K);
  return {solve_discrete_lyapunov(F, stage, LyapunovForm::left)};
}

/// The two closed forms of the average cost.
struct AverageCostForms {
  double covariance_form = 0.0;  ///< Tr((R_x + K^T R_u K) Sigma) + Tr(R_u W_z)
  double value_form = 0.0;       ///< Tr(P B W_z B^T + P W_w) + Tr(R_u W_z)
};

/// Relative agreement required between the two forms.
inline constexpr double kAverageCostAgreement = 1e-9;

inline AverageCostForms average_cost_forms(const LinearSystem& sys, const QuadraticCost& cost,
                                           const GainPolicy& pol) {
  const Matrix sigma = steady_state_covariance(sys, pol);
  const Matrix P = policy_value(sys, cost, pol.K).P;
  const double noise_term = (cost.R_u * pol.W_z).trace();
  AverageCostForms forms;
  forms.covariance_form =
      ((cost.R_x + pol.K.transpose() * cost.R_u * pol.K) * sigma).trace() + noise_term;
  forms.value_form =
      (P * sys.B * pol.W_z * sys.B.transpose() + P * sys.W_w).trace() + noise_term;
  return forms;
}

/// Long-run average of c(x,u) under u = Kx + z. Both closed forms are evaluated
/// and must agree to kAverageCostAgreement relative.
inline double average_cost(const LinearSystem& sys, const QuadraticCost& cost,
                           const GainPolicy& pol) {
  const AverageCostForms f = average_cost_forms(sys, cost, pol);
  const double scale = std::max(std::abs(f.covariance_form), std::abs(f.value_form));
  if (std::abs(f.covariance_form - f.value_form) > kAverageCostAgreement * scale + 1e-300) {
    throw NoSolutionError("average_cost: closed forms disagree (" +
                          std::to_string(f.covariance_form) + " vs " +
                          std::to_string(f.value_form) + ")");
  }
  return f.covariance_form;
}

/// Q-function blocks of the policy:
/// S_xx = R_x + A^T P A, S_ux = B^T P A, S_uu = R_u + B^T P B, J = average cost.
inline QParams q_params(const LinearSystem& sys, const QuadraticCost& cost,
                        const GainPolicy& pol) {
  const Matrix P = policy_value(sys, cost, pol.K).P;
  const Matrix& A = sys.A;
  const Matrix& B = sys.B;
  QParams qp;
  qp.S_xx = symmetrize(cost.R_x + A.transpose() * P * A);
  qp.S_ux = B.transpose() * P * A;
  qp.S_uu = symmetrize(cost.R_u + B.transpose() * P * B);
  qp.J = average_cost(sys, cost, pol);
  return qp;
}

inline double q_value(const QParams& qp, const Vector& x, const Vector& u) {
  if (x.size() != qp.S_xx.rows() || u.size() != qp.S_uu.rows()) {
    throw DimensionError("q_value: state/action sizes " + std::to_string(x.size()) + "/" +
                         std::to_string(u.size()) + " do not match QParams");
  }
  return 0.5 * x.dot(qp.S_xx * x) + u.dot(qp.S_ux * x) + 0.5 * u.dot(qp.S_uu * u) - qp.J;
}

namespace detail {

/// One Riccati value-iteration sweep from P; returns the greedy gain and the new P.
inline std::pair<Matrix, Matrix> riccati_sweep(const LinearSystem& sys,
                                               const QuadraticCost& cost, const Matrix& P) {
  const Matrix& A = sys.A;
  const Matrix& B = sys.B;
  const Matrix gram = cost.R_u + B.transpose() * P * B;
  const Matrix K = -gram.ldlt().solve(B.transpose() * P * A);
  const Matrix next = symmetrize(cost.R_x + A.transpose() * P * A + A.transpose() * P * B * K);
  return {K, next};
}

}  // namespace detail

/// Gain of the finite-horizon LQ problem (terminal weight R_x) applied at the
/// first stage; this is the receding-horizon controller of an LTI system.
inline Matrix finite_horizon_lqr_gain(const LinearSystem& sys, const QuadraticCost& cost,
                                      int horizon) {
  sys.validate();
  cost.validate(sys.n(), sys.m());
  if (horizon < 1) throw InputError("finite_horizon_lqr_gain: horizon must be >= 1");
  Matrix P = cost.R_x;
  Matrix K = Matrix::Zero(sys.m(), sys.n());
  for (int k = 0; k < horizon; ++k) {
    auto [gain, next] = detail::riccati_sweep(sys, cost, P);
    K = std::move(gain);
    P = std::move(next);
  }
  return K;
}

/// Infinite-horizon LQR gain K = -(R_u + B^T P B)^{-1} B^T P A, with P the fixed
/// point of Riccati value iteration started from R_x.
inline Matrix optimal_lqr_gain(const LinearSystem& sys, const QuadraticCost& cost,
                               long max_sweeps = 100000, double tol = 1e-13) {
  sys.validate();
  cost.validate(sys.n(), sys.m());
  Matrix P = cost.R_x;
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    auto [K, next] = detail::riccati_sweep(sys, cost, P);
    if (!all_finite(next)) break;
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tol * (1.0 + P.cwiseAbs().maxCoeff())) {
      K = detail::riccati_sweep(sys, cost, P).first;
      if (!is_stabilizing(sys.A, sys.B, K)) {
        throw NoSolutionError("optimal_lqr_gain: converged gain is not stabilizing");
      }
      return K;
    }
  }
  throw NoSolutionError("optimal_lqr_gain: Riccati value iteration did not converge in " +
                        std::to_string(max_sweeps) + " sweeps");
}

}  // namespace fpg

#endif  // FPG_LQR_HPP
