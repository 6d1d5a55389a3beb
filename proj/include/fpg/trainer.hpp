#ifndef FPG_TRAINER_HPP
#define FPG_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fpg/bc_policy.hpp"
#include "fpg/critic.hpp"
#include "fpg/csv.hpp"
#include "fpg/dataset.hpp"
#include "fpg/lqr.hpp"

namespace fpg {

/// Smallest eigenvalue of Sigma_D accepted by the constants and K* solve.
inline constexpr double kMomentFloor = 1e-10;

/// Frozen-critic one-step loss
///   l(K) = E_{x~D,z}[Qbar(x, Kx+z)] + alpha/2 E||Kx + z - mu_b(x,z)||^2,
/// which is an exact quadratic in K once Qbar and the data moments are fixed.
struct FrozenSurrogate {
  QParams qp;     ///< frozen critic blocks (S_xx, S_ux, S_uu, J)
  Matrix sigma_D;  ///< E_D[x x^T]
  Matrix C_b;      ///< E[mu_b(x,z) x^T]
  double beta_b = 0.0;  ///< E||z - mu_b(x,z)||^2
  std::optional<Matrix> K_b;
  double alpha = 0.1;
  Matrix W_z;

  Eigen::Index n() const { return sigma_D.rows(); }
  Eigen::Index m() const { return qp.S_uu.rows(); }

  /// Hessian factor S_uu + alpha I.
  Matrix curvature() const { return qp.S_uu + alpha * Matrix::Identity(m(), m()); }

  void validate() const {
    require_square(sigma_D, "FrozenSurrogate(sigma_D)");
    require_square(qp.S_uu, "FrozenSurrogate(S_uu)");
    require_shape(qp.S_xx, n(), n(), "FrozenSurrogate(S_xx)");
    require_shape(qp.S_ux, m(), n(), "FrozenSurrogate(S_ux)");
    require_shape(C_b, m(), n(), "FrozenSurrogate(C_b)");
    require_shape(W_z, m(), m(), "FrozenSurrogate(W_z)");
    if (K_b) require_shape(*K_b, m(), n(), "FrozenSurrogate(K_b)");
    if (!(alpha > 0.0)) throw InputError("FrozenSurrogate: alpha must be > 0");
  }
};

inline FrozenSurrogate make_surrogate(const QParams& qp, const Moments& moments,
                                      const BCMoments& bc, double alpha, const Matrix& W_z,
                                      std::optional<Matrix> K_b = std::nullopt) {
  FrozenSurrogate s{qp, moments.sigma_D, bc.C_b, bc.beta_b, std::move(K_b), alpha, W_z};
  s.validate();
  return s;
}

namespace detail {

inline void check_gain(const Matrix& K, const FrozenSurrogate& s, const char* who) {
  require_shape(K, s.m(), s.n(), who);
}

inline void require_moments(const FrozenSurrogate& s, const char* who) {
  const double lmin = min_eigenvalue(s.sigma_D);
  if (lmin < kMomentFloor) {
    throw MomentDegeneracyError(std::string(who) + ": lambda_min(Sigma_D) = " +
                                std::to_string(lmin) + " below " + std::to_string(kMomentFloor));
  }
}

inline void require_curvature(const FrozenSurrogate& s, const char* who) {
  if (min_eigenvalue(s.curvature()) <= 0.0) {
    throw InputError(std::string(who) + ": S_uu + alpha I is not positive definite");
  }
}

}  // namespace detail

/// Closed form of the frozen one-step loss.
inline double surrogate_loss(const Matrix& K, const FrozenSurrogate& s) {
  detail::check_gain(K, s, "surrogate_loss");
  const Matrix& sigma = s.sigma_D;
  const QParams& q = s.qp;
  const double critic_part = 0.5 * (q.S_xx * sigma).trace() +
                             (K.transpose() * q.S_ux * sigma).trace() +
                             0.5 * (K.transpose() * q.S_uu * K * sigma).trace() +
                             0.5 * (q.S_uu * s.W_z).trace() - q.J;
  const double bc_part = 0.5 * s.alpha *
                         ((K.transpose() * K * sigma).trace() -
                          2.0 * (K.transpose() * s.C_b).trace() + s.beta_b);
  return critic_part + bc_part;
}

/// grad l(K) = (S_ux + S_uu K) Sigma_D + alpha (K Sigma_D - C_b).
inline Matrix loss_gradient(const Matrix& K, const FrozenSurrogate& s) {
  detail::check_gain(K, s, "loss_gradient");
  return (s.qp.S_ux + s.qp.S_uu * K) * s.sigma_D + s.alpha * (K * s.sigma_D - s.C_b);
}

/// The same gradient written around the optimum: (S_uu + alpha I)(K - K*) Sigma_D.
inline Matrix loss_gradient_about_optimum(const Matrix& K, const Matrix& K_star,
                                          const FrozenSurrogate& s) {
  detail::check_gain(K, s, "loss_gradient_about_optimum");
  return s.curvature() * (K - K_star) * s.sigma_D;
}

/// l(K) - l(K*) = 1/2 Tr((K-K*)^T (S_uu + alpha I)(K-K*) Sigma_D); evaluated
/// directly so small gaps do not suffer cancellation.
inline double quadratic_gap(const Matrix& K, const Matrix& K_star, const FrozenSurrogate& s) {
  const Matrix D = K - K_star;
  return 0.5 * (D.transpose() * s.curvature() * D * s.sigma_D).trace();
}

/// Central differences, entry by entry.
template <class Loss>
Matrix finite_diff_gradient(Loss&& loss, const Matrix& K, double h) {
  if (!(h > 0.0)) throw InputError("finite_diff_gradient: h must be > 0");
  Matrix grad(K.rows(), K.cols());
  Matrix probe = K;
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      probe(i, j) = K(i, j) + h;
      const double up = loss(probe);
      probe(i, j) = K(i, j) - h;
      const double down = loss(probe);
      probe(i, j) = K(i, j);
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

/// L = ||S_uu + alpha I||_2 ||Sigma_D||_2.
inline double smoothness_constant(const FrozenSurrogate& s) {
  return spectral_norm(s.curvature()) * spectral_norm(s.sigma_D);
}

struct DominanceConstants {
  /// 1 / (2 ||(S_uu+alpha I)^{-1}||_F^2 ||Sigma_D^{-1}||_F^2 ||R_u + alpha/2 I||_F)
  double mu_paper = 0.0;
  /// lambda_min(Sigma_D) lambda_min(S_uu + alpha I): exact PL constant of the quadratic.
  double mu_exact = 0.0;
};

inline DominanceConstants dominance_constant(const FrozenSurrogate& s, const Matrix& R_u) {
  require_shape(R_u, s.m(), s.m(), "dominance_constant(R_u)");
  detail::require_moments(s, "dominance_constant");
  detail::require_curvature(s, "dominance_constant");
  const Matrix H = s.curvature();
  const double h_inv = H.inverse().norm();
  const double sigma_inv = s.sigma_D.inverse().norm();
  const double ru = (R_u + 0.5 * s.alpha * Matrix::Identity(s.m(), s.m())).norm();
  DominanceConstants mu;
  mu.mu_paper = 1.0 / (2.0 * h_inv * h_inv * sigma_inv * sigma_inv * ru);
  mu.mu_exact = min_eigenvalue(s.sigma_D) * min_eigenvalue(H);
  return mu;
}

/// K* = (S_uu + alpha I)^{-1} (alpha C_b Sigma_D^{-1} - S_ux), the zero of loss_gradient.
inline Matrix optimal_regularized_gain(const FrozenSurrogate& s) {
  detail::require_moments(s, "optimal_regularized_gain");
  detail::require_curvature(s, "optimal_regularized_gain");
  // C_b Sigma^{-1} = (Sigma^{-1} C_b^T)^T since Sigma is symmetric.
  const Matrix cb_sigma_inv = s.sigma_D.ldlt().solve(s.C_b.transpose()).transpose();
  return s.curvature().ldlt().solve(s.alpha * cb_sigma_inv - s.qp.S_ux);
}

inline Matrix gd_step(const Matrix& K, const Matrix& grad, double eta) {
  if (!(eta >= 0.0)) throw InputError("gd_step: eta must be >= 0");
  if (K.rows() != grad.rows() || K.cols() != grad.cols()) {
    throw DimensionError("gd_step: gradient is " + shape_of(grad) + ", gain is " + shape_of(K));
  }
  return K - eta * grad;
}

// ---------------------------------------------------------------------------
// Training loop and certificate

enum class CriticMode { analytic, learned };
enum class SMode { frozen, reevaluated };
enum class BCKind { linear, flow };

struct TrainerConfig {
  double alpha = 0.1;
  std::optional<double> eta;  ///< absolute step; nullopt: eta = eta_scale / L
  double eta_scale = 1.0;
  int iterations = 200;  ///< step budget; a frozen run ends early once a step leaves K unchanged
  CriticMode critic_mode = CriticMode::analytic;
  SMode s_mode = SMode::frozen;
  BCKind bc_kind = BCKind::linear;
  Matrix W_z;
  std::uint64_t seed = 0;
  CriticTrainConfig critic;            ///< learned mode: pre-training of the critic
  int critic_steps_per_iteration = 10;  ///< learned + reevaluated: TD steps between updates
  BCMomentOptions bc_moments;
};

struct IterationRecord {
  long iter = 0;
  double loss = 0.0;
  double gap = 0.0;
  double grad_fro = 0.0;
  double rho = std::numeric_limits<double>::quiet_NaN();  ///< NaN without a model
  double rate_bound = 0.0;
  Matrix K;
};

struct InequalityAudit {
  bool pass = true;
  bool evaluated = true;
  std::vector<long> violations;  ///< offending iteration indices
};

struct AuditReport {
  InequalityAudit dominance_exact;
  InequalityAudit dominance_paper;  ///< informational
  InequalityAudit rate;
  InequalityAudit stability;

  bool all_pass() const { return dominance_exact.pass && rate.pass && stability.pass; }
};

struct TheoryCertificate {
  double L = 0.0;
  double mu_paper = 0.0;
  double mu_exact = 0.0;
  double eta = 0.0;
  double alpha = 0.0;
  Matrix K_star;
  double rate_factor = 0.0;  ///< 1 - 2 eta mu + eta^2 L mu with mu = mu_exact
  /// Gap resolution: value of the gap at a relative perturbation of K* of
  /// kGapResolution. Gaps below it are treated as zero by the audits.
  double gap_floor = 0.0;
  /// Rounding bound on a recorded gradient norm: kGradResolution times the
  /// magnitude of the summands of loss_gradient along the trace.
  double grad_floor = 0.0;
  AuditReport audit;
};

inline constexpr double kGapResolution = 1e-12;
inline constexpr double kGradResolution = 64.0 * std::numeric_limits<double>::epsilon();
inline constexpr double kRateSlack = 1e-8;
inline constexpr double kDominanceSlack = 1e-9;

inline double rate_factor(double eta, double mu, double L) {
  return 1.0 - 2.0 * eta * mu + eta * eta * L * mu;
}

inline double gap_floor(const FrozenSurrogate& s, const Matrix& K_star) {
  const double dk = kGapResolution * std::max(1.0, K_star.norm());
  return 0.5 * spectral_norm(s.curvature()) * spectral_norm(s.sigma_D) * dk * dk;
}

inline double grad_floor(const FrozenSurrogate& s, double max_gain_norm) {
  const double sigma = spectral_norm(s.sigma_D);
  const double terms = spectral_norm(s.qp.S_ux) * sigma +
                       (spectral_norm(s.qp.S_uu) + s.alpha) * max_gain_norm * sigma +
                       s.alpha * s.C_b.norm();
  return kGradResolution * terms;
}

/// Audits a recorded trace against the certificate constants:
///  (a) gap(t) <= ||grad(t)||_F^2 / (2 mu) for mu_exact and (informational) mu_paper,
///  (b) gap(t) <= rate_factor^t gap(0) (1 + 1e-8),
///  (c) rho(A + B K_t) < 1.
/// Each inequality is granted the certificate's gap_floor as absolute slack and
/// the dominance bound is evaluated at ||grad||_F + grad_floor.
inline AuditReport verify_certificate(const std::vector<IterationRecord>& trace,
                                      const TheoryCertificate& cert) {
  AuditReport rep;
  if (trace.empty()) return rep;
  const double gap0 = trace.front().gap;
  const double factor = std::max(0.0, cert.rate_factor);
  bool any_rho = false;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& r = trace[t];
    const long idx = r.iter;
    const double g = r.grad_fro + cert.grad_floor;
    const double g2 = g * g;
    if (r.gap > g2 / (2.0 * cert.mu_exact) * (1.0 + kDominanceSlack) + cert.gap_floor) {
      rep.dominance_exact.violations.push_back(idx);
    }
    if (r.gap > g2 / (2.0 * cert.mu_paper) * (1.0 + kDominanceSlack) + cert.gap_floor) {
      rep.dominance_paper.violations.push_back(idx);
    }
    const double bound = std::pow(factor, static_cast<double>(t)) * gap0;
    if (r.gap > bound * (1.0 + kRateSlack) + cert.gap_floor) rep.rate.violations.push_back(idx);
    if (!std::isnan(r.rho)) {
      any_rho = true;
      if (!(r.rho < 1.0)) rep.stability.violations.push_back(idx);
    }
  }
  rep.dominance_exact.pass = rep.dominance_exact.violations.empty();
  rep.dominance_paper.pass = rep.dominance_paper.violations.empty();
  rep.rate.pass = rep.rate.violations.empty();
  rep.stability.evaluated = any_rho;
  rep.stability.pass = rep.stability.violations.empty();
  return rep;
}

struct TrainResult {
  Matrix K_final;
  std::vector<IterationRecord> trace;
  TheoryCertificate cert;
  FrozenSurrogate surrogate;  ///< surrogate at K0
  std::optional<CriticWeights> critic;
};

namespace detail {

struct CriticSource {
  CriticMode mode;
  const LinearSystem* sys;
  const QuadraticCost* cost;
  const Dataset* ds;
  const TrainerConfig* cfg;
  CriticWeights critic;
  CriticWeights target;
  long td_steps = 0;

  QParams at(const Matrix& K) {
    if (mode == CriticMode::analytic) return q_params(*sys, *cost, GainPolicy{K, cfg->W_z});
    return q_params_from_critic(critic);
  }

  void pretrain(const Matrix& K0) {
    CriticTrainConfig c = cfg->critic;
    c.seed = derive_seed(cfg->seed, 100);
    auto res = train_critic(*ds, GainPolicy{K0, cfg->W_z}, c,
                            CriticWeights::zeros(ds->n, ds->m));
    critic = std::move(res.critic);
    target = std::move(res.target);
    td_steps = c.steps;
  }

  void advance(const Matrix& K, int steps) {
    CriticTrainConfig c = cfg->critic;
    c.steps = steps;
    c.seed = derive_seed(cfg->seed, 1000 + static_cast<std::uint64_t>(td_steps));
    // Continue from the current critic/target pair.
    Rng rng(derive_seed(c.seed, 0));
    std::uniform_int_distribution<std::size_t> pick(0, ds->size() - 1);
    std::vector<Transition> batch(static_cast<std::size_t>(c.batch_size));
    for (int s = 0; s < steps; ++s) {
      for (auto& t : batch) t = ds->transitions[pick(rng)];
      auto r = critic_td_step(critic, target, batch, GainPolicy{K, cfg->W_z}, c.lr,
                              derive_seed(c.seed, 1 + static_cast<std::uint64_t>(s)), c.loss);
      if (!std::isfinite(r.loss)) {
        throw TrainingError("critic: non-finite TD loss at step " + std::to_string(td_steps));
      }
      critic = std::move(r.critic);
      ++td_steps;
      if (td_steps % c.target_every == 0) target = soft_update(target, critic, c.tau);
    }
  }
};

inline void check_step(double eta, double L, long iter) {
  if (!(eta > 0.0)) throw StepSizeError("eta must be > 0");
  if (eta >= 2.0 / L) {
    throw StepSizeError("eta = " + csv::real(eta) + " violates eta < 2/L = " + csv::real(2.0 / L) +
                        (iter >= 0 ? " at iteration " + std::to_string(iter) : std::string()));
  }
}

}  // namespace detail

/// Gradient descent on the one-step loss over the gain K.
///
/// In frozen mode the critic blocks are taken once at K0 (analytic model or a
/// pre-trained TD critic) and the loss is an exact quadratic, so the recorded
/// gaps, gradients and spectral radii can be audited against L, mu and the
/// linear rate. In reevaluated mode the blocks follow the current gain.
inline TrainResult train_one_step_policy(const TrainerConfig& cfg, const Dataset& ds,
                                         const BCPolicy& bc,
                                         const std::optional<LinearSystem>& sys,
                                         const QuadraticCost& cost, const Matrix& K0) {
  if (ds.empty()) throw InputError("train_one_step_policy: empty dataset");
  if (!(cfg.alpha > 0.0)) throw InputError("train_one_step_policy: alpha must be > 0");
  if (cfg.iterations < 0) throw InputError("train_one_step_policy: iterations must be >= 0");
  require_shape(K0, ds.m, ds.n, "train_one_step_policy(K0)");
  require_shape(cfg.W_z, ds.m, ds.m, "train_one_step_policy(W_z)");
  const bool flow = std::holds_alternative<FlowBCPolicy>(bc);
  if (flow != (cfg.bc_kind == BCKind::flow)) {
    throw InputError("train_one_step_policy: bc_kind does not match the supplied BC policy");
  }
  if (cfg.critic_mode == CriticMode::analytic && !sys) {
    throw InputError("train_one_step_policy: analytic critic mode requires the system model");
  }
  if (sys && !is_stabilizing(sys->A, sys->B, K0)) {
    throw InstabilityError("train_one_step_policy: K0 is not stabilizing", 0);
  }

  const Moments moments = dataset_moments(ds);
  if (min_eigenvalue(moments.sigma_D) < kMomentFloor) {
    throw MomentDegeneracyError("train_one_step_policy: Sigma_D is singular");
  }
  BCMomentOptions bc_opts = cfg.bc_moments;
  bc_opts.seed = derive_seed(cfg.seed, 7);
  const BCMoments bcm = bc_moments(ds, bc, cfg.W_z, bc_opts);
  std::optional<Matrix> K_b;
  if (const auto* lin = std::get_if<LinearBCModel>(&bc)) K_b = lin->K_b;

  detail::CriticSource source{cfg.critic_mode, sys ? &*sys : nullptr, &cost, &ds, &cfg, {}, {}};
  if (cfg.critic_mode == CriticMode::learned) source.pretrain(K0);

  const auto surrogate_at = [&](const Matrix& K) {
    return make_surrogate(source.at(K), moments, bcm, cfg.alpha, cfg.W_z, K_b);
  };

  const FrozenSurrogate s0 = surrogate_at(K0);
  const double L0 = smoothness_constant(s0);
  const DominanceConstants mu0 = dominance_constant(s0, cost.R_u);
  const double eta0 = cfg.eta.value_or(cfg.eta_scale / L0);
  detail::check_step(eta0, L0, -1);

  TrainResult res;
  res.surrogate = s0;

  // Reference optimum.
  Matrix K_star;
  if (cfg.s_mode == SMode::frozen || cfg.critic_mode == CriticMode::learned) {
    K_star = optimal_regularized_gain(s0);
  } else {
    K_star = K0;
    bool converged = false;
    for (int sweep = 0; sweep < 1000; ++sweep) {
      const Matrix next = optimal_regularized_gain(surrogate_at(K_star));
      const double change = (next - K_star).norm();
      K_star = next;
      if (change < 1e-10) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NoSolutionError("train_one_step_policy: coupled optimum did not converge in 1000 sweeps");
    }
  }

  std::vector<FrozenSurrogate> per_iter;
  Matrix K = K0;
  FrozenSurrogate s = s0;
  for (long t = 0; t <= cfg.iterations; ++t) {
    if (cfg.s_mode == SMode::reevaluated && t > 0) {
      if (cfg.critic_mode == CriticMode::learned) source.advance(K, cfg.critic_steps_per_iteration);
      s = surrogate_at(K);
    }
    IterationRecord rec;
    rec.iter = t;
    rec.K = K;
    rec.loss = surrogate_loss(K, s);
    const Matrix grad = loss_gradient(K, s);
    rec.grad_fro = grad.norm();
    if (!std::isfinite(rec.loss) || !grad.allFinite()) {
      throw TrainingError("train_one_step_policy: non-finite loss at iteration " + std::to_string(t));
    }
    if (sys) {
      rec.rho = spectral_radius(sys->A + sys->B * K);
      if (!(rec.rho < 1.0)) {
        throw InstabilityError("train_one_step_policy: rho(A+BK) = " + csv::real(rec.rho) +
                                   " at iteration " + std::to_string(t),
                               t);
      }
    }
    res.trace.push_back(std::move(rec));
    if (cfg.s_mode == SMode::reevaluated) per_iter.push_back(s);
    if (t == cfg.iterations) break;

    double eta = eta0;
    if (cfg.s_mode == SMode::reevaluated && t > 0) {
      const double Lt = smoothness_constant(s);
      eta = cfg.eta.value_or(cfg.eta_scale / Lt);
      detail::check_step(eta, Lt, t);
    }
    Matrix next = gd_step(K, grad, eta);
    // With a fixed surrogate an unchanged iterate repeats forever.
    const bool fixed_surrogate =
        cfg.s_mode == SMode::frozen || cfg.critic_mode == CriticMode::analytic;
    if (fixed_surrogate && next == K) break;
    K = std::move(next);
  }
  res.K_final = K;

  TheoryCertificate& cert = res.cert;
  cert.L = L0;
  cert.mu_paper = mu0.mu_paper;
  cert.mu_exact = mu0.mu_exact;
  cert.eta = eta0;
  cert.alpha = cfg.alpha;
  cert.K_star = K_star;
  cert.rate_factor = rate_factor(eta0, mu0.mu_exact, L0);
  cert.gap_floor = gap_floor(s0, K_star);
  double max_gain = 0.0;
  for (const auto& r : res.trace) max_gain = std::max(max_gain, r.K.norm());
  cert.grad_floor = grad_floor(s0, max_gain);

  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    auto& r = res.trace[i];
    if (cfg.s_mode == SMode::frozen) {
      r.gap = quadratic_gap(r.K, K_star, s0);
    } else {
      r.gap = surrogate_loss(r.K, per_iter[i]) - surrogate_loss(K_star, per_iter[i]);
    }
  }
  const double gap0 = res.trace.front().gap;
  const double factor = std::max(0.0, cert.rate_factor);
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    res.trace[i].rate_bound = std::pow(factor, static_cast<double>(i)) * gap0;
  }
  cert.audit = verify_certificate(res.trace, cert);
  if (cfg.s_mode == SMode::reevaluated) {
    // The constants certify one fixed quadratic; with a moving surrogate only
    // stability is audited.
    const InequalityAudit skipped{true, false, {}};
    cert.audit.dominance_exact = skipped;
    cert.audit.dominance_paper = skipped;
    cert.audit.rate = skipped;
  }
  if (cfg.critic_mode == CriticMode::learned) res.critic = source.critic;
  return res;
}

/// Certificate CSV: a "key,value" header block, a blank line, then the trace
/// with columns iter,loss,gap,grad_fro,rho,rate_bound.
inline void write_certificate(const std::string& path, const std::vector<IterationRecord>& trace,
                              const TheoryCertificate& cert) {
  auto out = csv::open_for_write(path);
  const auto flag = [](const InequalityAudit& a) { return a.evaluated ? (a.pass ? "1" : "0") : "na"; };
  out << "L," << csv::real(cert.L) << '\n';
  out << "mu_paper," << csv::real(cert.mu_paper) << '\n';
  out << "mu_exact," << csv::real(cert.mu_exact) << '\n';
  out << "eta," << csv::real(cert.eta) << '\n';
  out << "alpha," << csv::real(cert.alpha) << '\n';
  out << "rate_factor," << csv::real(cert.rate_factor) << '\n';
  out << "gap_floor," << csv::real(cert.gap_floor) << '\n';
  out << "grad_floor," << csv::real(cert.grad_floor) << '\n';
  out << "K_star_shape," << cert.K_star.rows() << ',' << cert.K_star.cols() << '\n';
  out << "K_star," << csv::join_row_major(cert.K_star) << '\n';
  out << "dominance_pass_exact," << flag(cert.audit.dominance_exact) << '\n';
  out << "dominance_pass_paper," << flag(cert.audit.dominance_paper) << '\n';
  out << "dominance_paper_violations," << cert.audit.dominance_paper.violations.size() << '\n';
  out << "rate_pass," << flag(cert.audit.rate) << '\n';
  out << "stability_pass," << flag(cert.audit.stability) << '\n';
  out << '\n';
  out << "iter,loss,gap,grad_fro,rho,rate_bound\n";
  for (const auto& r : trace) {
    out << r.iter << ',' << csv::real(r.loss) << ',' << csv::real(r.gap) << ','
        << csv::real(r.grad_fro) << ',' << csv::real(r.rho) << ',' << csv::real(r.rate_bound)
        << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace fpg

#endif  // FPG_TRAINER_HPP
