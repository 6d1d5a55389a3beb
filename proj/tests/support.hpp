#ifndef FPG_TESTS_SUPPORT_HPP
#define FPG_TESTS_SUPPORT_HPP

#include <cstdint>
#include <random>

#include "fpg/lqr.hpp"
#include "fpg/trainer.hpp"

namespace fpg::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = g(rng);
  return M;
}

/// Symmetric positive definite with eigenvalues roughly in [floor, floor + scale].
inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double floor = 0.1,
                         double scale = 1.0) {
  const Matrix G = random_matrix(rng, n, n);
  return symmetrize(scale * G * G.transpose() / static_cast<double>(n) +
                    floor * Matrix::Identity(n, n));
}

inline Eigen::Index random_dim(std::mt19937_64& rng, Eigen::Index lo, Eigen::Index hi) {
  return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
}

/// Random system and gain, with A and B rescaled so rho(A + BK) lies in [0.3, target].
struct StableInstance {
  LinearSystem sys;
  QuadraticCost cost;
  GainPolicy pol;
};

inline StableInstance random_stable_instance(std::mt19937_64& rng, Eigen::Index n,
                                             Eigen::Index m, double target = 0.9) {
  StableInstance s;
  s.sys.A = random_matrix(rng, n, n);
  s.sys.B = random_matrix(rng, n, m);
  s.sys.W_w = random_spd(rng, n, 0.01, 0.5);
  s.cost.R_x = random_spd(rng, n, 0.1);
  s.cost.R_u = random_spd(rng, m, 0.1);
  s.pol.K = random_matrix(rng, m, n, 0.3);
  s.pol.W_z = random_spd(rng, m, 0.01, 0.2);
  const double rho = spectral_radius(s.sys.A + s.sys.B * s.pol.K);
  const double u = std::uniform_real_distribution<double>(0.3, target)(rng);
  s.sys.A *= u / rho;
  s.sys.B *= u / rho;
  return s;
}

/// Frozen surrogate with random SPD blocks and data moments.
inline FrozenSurrogate random_surrogate(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m,
                                        double alpha = 0.1) {
  FrozenSurrogate s;
  const Matrix S = random_spd(rng, n + m, 0.2);
  s.qp.S_xx = S.topLeftCorner(n, n);
  s.qp.S_ux = S.bottomLeftCorner(m, n);
  s.qp.S_uu = S.bottomRightCorner(m, m);
  s.qp.J = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
  s.sigma_D = random_spd(rng, n, 0.2);
  s.K_b = random_matrix(rng, m, n, 0.5);
  s.C_b = *s.K_b * s.sigma_D;
  s.beta_b = (s.K_b->transpose() * *s.K_b * s.sigma_D).trace();
  s.alpha = alpha;
  s.W_z = random_spd(rng, m, 0.01, 0.1);
  return s;
}

/// Scalar frozen instance used throughout the documentation.
inline FrozenSurrogate scalar_surrogate() {
  FrozenSurrogate s;
  s.qp.S_xx = Matrix::Constant(1, 1, 4.0 / 3.0);
  s.qp.S_ux = Matrix::Constant(1, 1, 2.0 / 3.0);
  s.qp.S_uu = Matrix::Constant(1, 1, 7.0 / 3.0);
  s.qp.J = 0.0;
  s.sigma_D = Matrix::Constant(1, 1, 2.0);
  s.K_b = Matrix::Constant(1, 1, -0.4);
  s.C_b = Matrix::Constant(1, 1, -0.8);
  s.beta_b = 0.16 * 2.0;
  s.alpha = 0.1;
  s.W_z = Matrix::Zero(1, 1);
  return s;
}

inline LinearSystem scalar_system(double a = 0.5, double b = 1.0, double w = 0.0) {
  return {Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Constant(1, 1, w)};
}

inline QuadraticCost scalar_cost(double rx = 1.0, double ru = 1.0) {
  return {Matrix::Constant(1, 1, rx), Matrix::Constant(1, 1, ru)};
}

}  // namespace fpg::testing

#endif  // FPG_TESTS_SUPPORT_HPP
