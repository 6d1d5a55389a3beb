#ifndef FPG_CRITIC_HPP
#define FPG_CRITIC_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "fpg/csv.hpp"
#include "fpg/dataset.hpp"
#include "fpg/lqr.hpp"

namespace fpg {

/// Version tag of the feature ordering written next to serialized weights.
inline constexpr const char* kFeatureOrdering = "upper_row_major_v1";

inline Eigen::Index feature_dim(Eigen::Index n, Eigen::Index m) {
  const Eigen::Index d = n + m;
  return d * (d + 1) / 2;
}

/// Quadratic monomials xi_i xi_j (i <= j) of xi = [x; u], row-major over the
/// upper triangle.
inline Vector features(const Vector& x, const Vector& u) {
  const Eigen::Index d = x.size() + u.size();
  if (x.size() == 0 || u.size() == 0) throw DimensionError("features: empty state or action");
  Vector xi(d);
  xi << x, u;
  Vector phi(d * (d + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) phi(k++) = xi(i) * xi(j);
  }
  return phi;
}

/// Weights w with w^T features(x,u) = 1/2 xi^T S xi: diagonal entries carry
/// S_ii/2, off-diagonal entries S_ij (i.e. S/2 with off-diagonals doubled).
inline Vector pack(const Matrix& S) {
  require_square(S, "pack");
  const Eigen::Index d = S.rows();
  Vector w(d * (d + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    w(k++) = 0.5 * S(i, i);
    for (Eigen::Index j = i + 1; j < d; ++j) w(k++) = 0.5 * (S(i, j) + S(j, i));
  }
  return w;
}

/// Inverse of pack for symmetric S.
inline Matrix unpack(const Vector& w, Eigen::Index d) {
  if (w.size() != d * (d + 1) / 2) {
    throw DimensionError("unpack: weight length " + std::to_string(w.size()) +
                         " does not match dimension " + std::to_string(d));
  }
  Matrix S(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    S(i, i) = 2.0 * w(k++);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      S(i, j) = w(k);
      S(j, i) = w(k);
      ++k;
    }
  }
  return S;
}

/// Linear critic over quadratic features: Q(x,u) = w^T phi(x,u) - j_hat.
struct CriticWeights {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  Vector w;
  double j_hat = 0.0;

  static CriticWeights zeros(Eigen::Index n, Eigen::Index m) {
    return {n, m, Vector::Zero(feature_dim(n, m)), 0.0};
  }

  double quadratic(const Vector& x, const Vector& u) const {
    check(x, u);
    return w.dot(features(x, u));
  }

  double q_value(const Vector& x, const Vector& u) const { return quadratic(x, u) - j_hat; }

  void check(const Vector& x, const Vector& u) const {
    if (x.size() != n || u.size() != m || w.size() != feature_dim(n, m)) {
      throw DimensionError("CriticWeights: dimension mismatch");
    }
  }
};

/// Critic whose weights reproduce q_params of the policy exactly.
inline CriticWeights analytic_critic(const LinearSystem& sys, const QuadraticCost& cost,
                                     const GainPolicy& pol) {
  const QParams qp = q_params(sys, cost, pol);
  return {sys.n(), sys.m(), pack(qp.block()), qp.J};
}

/// Reads the Q-function blocks back out of critic weights.
inline QParams q_params_from_critic(const CriticWeights& c) {
  const Matrix S = unpack(c.w, c.n + c.m);
  QParams qp;
  qp.S_xx = S.topLeftCorner(c.n, c.n);
  qp.S_ux = S.bottomLeftCorner(c.m, c.n);
  qp.S_uu = S.bottomRightCorner(c.m, c.m);
  qp.J = c.j_hat;
  return qp;
}

enum class CriticLoss {
  /// delta = w^T phi(x,u) - (1/2 (c - j_hat) + w_bar^T phi(x',u')).
  /// The stage cost enters with the 1/2 of the Q-function's quadratic form and
  /// j_hat is the average of the stored (unweighted) cost, so the analytic
  /// critic is the fixed point.
  differential,
  /// delta = (w^T phi(x,u) - j_hat) + c - (w_bar^T phi(x',u') - j_bar).
  paper_literal,
};

struct TdStepResult {
  CriticWeights critic;
  double loss = 0.0;
};

/// One semi-gradient step on the mean squared TD residual; next actions are
/// u' = K x' + z with z ~ N(0, W_z) drawn from `rng_seed`.
inline TdStepResult critic_td_step(const CriticWeights& critic, const CriticWeights& target,
                                   std::span<const Transition> batch, const GainPolicy& pol,
                                   double lr, std::uint64_t rng_seed,
                                   CriticLoss kind = CriticLoss::differential) {
  if (batch.empty()) throw InputError("critic_td_step: empty batch");
  if (target.w.size() != critic.w.size() || target.n != critic.n || target.m != critic.m) {
    throw DimensionError("critic_td_step: critic and target dimensions differ");
  }
  require_shape(pol.K, critic.m, critic.n, "critic_td_step(K)");
  const Matrix factor = gaussian_factor(pol.W_z);
  Rng rng(rng_seed);

  Vector grad_w = Vector::Zero(critic.w.size());
  double grad_j = 0.0;
  double loss = 0.0;
  for (const auto& t : batch) {
    const Vector u_next = pol.K * t.x_next + factor * standard_normal(rng, critic.m);
    const Vector phi = features(t.x, t.u);
    const double next_q = target.quadratic(t.x_next, u_next);
    double delta = 0.0;
    double ddelta_dj = 0.0;
    if (kind == CriticLoss::differential) {
      delta = critic.w.dot(phi) - (0.5 * (t.c - critic.j_hat) + next_q);
      ddelta_dj = 0.5;
    } else {
      delta = (critic.w.dot(phi) - critic.j_hat) + t.c - (next_q - target.j_hat);
      ddelta_dj = -1.0;
    }
    loss += delta * delta;
    grad_w += 2.0 * delta * phi;
    grad_j += 2.0 * delta * ddelta_dj;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  TdStepResult out{critic, loss * inv};
  out.critic.w -= lr * inv * grad_w;
  out.critic.j_hat -= lr * inv * grad_j;
  return out;
}

/// target <- (1 - tau) target + tau critic, including j_hat.
inline CriticWeights soft_update(const CriticWeights& target, const CriticWeights& critic,
                                 double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw InputError("soft_update: tau must lie in [0, 1], got " + std::to_string(tau));
  }
  if (target.w.size() != critic.w.size()) throw DimensionError("soft_update: size mismatch");
  CriticWeights out = target;
  out.w = (1.0 - tau) * target.w + tau * critic.w;
  out.j_hat = (1.0 - tau) * target.j_hat + tau * critic.j_hat;
  return out;
}

enum class JHatMode {
  sgd,              ///< j_hat is a weight of the TD regression
  running_average,  ///< j_hat is the running mean of the sampled stage costs
};

struct CriticTrainConfig {
  double lr = 1e-3;
  int batch_size = 256;
  int steps = 1000;
  double tau = 0.005;
  int target_every = 10;
  CriticLoss loss = CriticLoss::differential;
  JHatMode j_hat = JHatMode::sgd;
  std::uint64_t seed = 0;
};

struct CriticTrainResult {
  CriticWeights critic;
  CriticWeights target;
  std::vector<double> loss_trace;
};

/// Minibatch TD training with soft target updates every `target_every` steps.
inline CriticTrainResult train_critic(const Dataset& ds, const GainPolicy& pol,
                                      const CriticTrainConfig& cfg, CriticWeights init) {
  if (ds.empty()) throw InputError("train_critic: empty dataset");
  if (cfg.batch_size < 1 || cfg.target_every < 1) {
    throw InputError("train_critic: batch_size and target_every must be >= 1");
  }
  CriticTrainResult res{init, init, {}};
  Rng rng(derive_seed(cfg.seed, 0));
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  std::vector<Transition> batch(static_cast<std::size_t>(cfg.batch_size));
  double cost_sum = 0.0;
  double cost_count = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& t : batch) t = ds.transitions[pick(rng)];
    if (cfg.j_hat == JHatMode::running_average) {
      for (const auto& t : batch) cost_sum += t.c;
      cost_count += static_cast<double>(batch.size());
      res.critic.j_hat = cost_sum / cost_count;
    }
    auto r = critic_td_step(res.critic, res.target, batch, pol, cfg.lr,
                            derive_seed(cfg.seed, 1 + static_cast<std::uint64_t>(step)), cfg.loss);
    if (!std::isfinite(r.loss) || !r.critic.w.allFinite() || !std::isfinite(r.critic.j_hat)) {
      throw TrainingError("train_critic: non-finite TD loss at step " + std::to_string(step));
    }
    res.critic = std::move(r.critic);
    if (cfg.j_hat == JHatMode::running_average) res.critic.j_hat = cost_sum / cost_count;
    res.loss_trace.push_back(r.loss);
    if ((step + 1) % cfg.target_every == 0) res.target = soft_update(res.target, res.critic, cfg.tau);
  }
  return res;
}

inline void save_critic(const CriticWeights& c, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << "features," << kFeatureOrdering << '\n';
  out << "n,m\n" << c.n << ',' << c.m << '\n';
  out << "j_hat," << csv::real(c.j_hat) << '\n';
  out << "w," << csv::join(c.w) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline CriticWeights load_critic(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.size() < 5) throw ParseError("truncated critic file", lines.size() + 1);
  if (lines[0] != std::string("features,") + kFeatureOrdering) {
    throw ParseError("unknown feature ordering", 1);
  }
  const auto dims = csv::split(lines[2]);
  if (dims.size() != 2) throw ParseError("expected 'n,m'", 3);
  CriticWeights c;
  c.n = csv::parse_integer(dims[0], 3);
  c.m = csv::parse_integer(dims[1], 3);
  const auto jf = csv::split(lines[3]);
  if (jf.size() != 2 || jf[0] != "j_hat") throw ParseError("expected 'j_hat,<value>'", 4);
  c.j_hat = csv::parse_real(jf[1], 4);
  const auto wf = csv::split(lines[4]);
  if (static_cast<Eigen::Index>(wf.size()) != feature_dim(c.n, c.m) + 1 || wf[0] != "w") {
    throw ParseError("weight row has wrong length", 5);
  }
  c.w.resize(feature_dim(c.n, c.m));
  for (Eigen::Index i = 0; i < c.w.size(); ++i) c.w(i) = csv::parse_real(wf[i + 1], 5);
  return c;
}

}  // namespace fpg

#endif  // FPG_CRITIC_HPP
