#ifndef FPG_BENCH_HPP
#define FPG_BENCH_HPP

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fpg/bc_policy.hpp"
#include "fpg/config.hpp"
#include "fpg/critic.hpp"
#include "fpg/csv.hpp"
#include "fpg/dataset.hpp"
#include "fpg/lqr.hpp"
#include "fpg/trainer.hpp"

namespace fpg {

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Evaluation rollouts

/// Simulation environment: the clipped linear model or the Euler-discretised
/// nonlinear pendulum
///   theta'' = -(g/l) sin(theta) - b/(m l^2) theta' + u/(m l^2),
/// whose linearisation at the origin is pendulum_system(params).
struct EvalEnv {
  EnvKind kind = EnvKind::linear_clipped;
  LinearSystem sys;
  PendulumParams params;

  static EvalEnv pendulum(EnvKind kind, const PendulumParams& p) {
    return {kind, pendulum_system(p), p};
  }

  Vector step(const Vector& x, const Vector& u, const Vector& w) const {
    Vector next;
    if (kind == EnvKind::linear_clipped) {
      next = sys.A * x + sys.B * u + w;
    } else {
      const double inertia = params.mass * params.length * params.length;
      next.resize(2);
      next(0) = x(0) + params.dt * x(1);
      next(1) = x(1) + params.dt * (-(params.gravity / params.length) * std::sin(x(0)) -
                                    (params.damping / inertia) * x(1) + u(0) / inertia);
      next += w;
    }
    detail::clip_speed(next, params.speed_limit);
    return next;
  }
};

struct EvalReport {
  std::vector<double> costs;  ///< episodic cost per rollout
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation
  double ci_low = 0.0;
  double ci_high = 0.0;
};

inline EvalReport summarize_costs(std::vector<double> costs) {
  EvalReport r;
  r.costs = std::move(costs);
  const double n = static_cast<double>(r.costs.size());
  if (r.costs.empty()) return r;
  for (double c : r.costs) r.mean += c;
  r.mean /= n;
  double ss = 0.0;
  for (double c : r.costs) ss += (c - r.mean) * (c - r.mean);
  r.std = r.costs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  r.ci_low = r.mean - 1.96 * r.std;
  r.ci_high = r.mean + 1.96 * r.std;
  return r;
}

/// Episodic cost sum_k c(x_k, u_k) of u = clip(Kx + z), z ~ N(0, W_z), over
/// `rollouts` episodes. Rollout r draws from derive_seed(seed, r), so different
/// policies evaluated with the same seed see the same initial states and noise.
inline EvalReport rollout_eval(const EvalEnv& env, const QuadraticCost& cost,
                               const GainPolicy& pol, int rollouts, int horizon,
                               std::uint64_t seed, const InitialStateSpec& init = {}) {
  const Eigen::Index n = env.sys.n();
  const Eigen::Index m = env.sys.m();
  require_shape(pol.K, m, n, "rollout_eval(K)");
  require_shape(pol.W_z, m, m, "rollout_eval(W_z)");
  if (env.kind == EnvKind::nonlinear_pendulum && (n != 2 || m != 1)) {
    throw DimensionError("rollout_eval: the nonlinear pendulum has n = 2, m = 1");
  }
  if (rollouts < 1 || horizon < 0) throw InputError("rollout_eval: rollouts must be >= 1");
  const Matrix zf = gaussian_factor(pol.W_z);
  const Matrix wf = gaussian_factor(env.sys.W_w);
  std::vector<double> costs;
  costs.reserve(static_cast<std::size_t>(rollouts));
  for (int r = 0; r < rollouts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Vector x = detail::initial_state(init, n, rng);
    double total = 0.0;
    for (int k = 0; k < horizon; ++k) {
      Vector u = pol.K * x + zf * standard_normal(rng, m);
      detail::clip_in_place(u, env.params.torque_limit);
      total += cost.stage(x, u);
      x = env.step(x, u, wf * standard_normal(rng, n));
    }
    costs.push_back(total);
  }
  return summarize_costs(std::move(costs));
}

// ---------------------------------------------------------------------------
// Pipeline

namespace detail {

/// Runs `fn`, tagging any library error that escapes with the stage name.
template <class Fn>
auto run_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(name);
    throw;
  }
}

inline std::string out_path(const std::string& dir, const char* file) {
  return (std::filesystem::path(dir) / file).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

}  // namespace detail

inline std::vector<std::string> failing_audits(const AuditReport& a) {
  std::vector<std::string> out;
  if (!a.dominance_exact.pass) out.push_back("dominance_exact");
  if (!a.rate.pass) out.push_back("rate");
  if (!a.stability.pass) out.push_back("stability");
  return out;
}

struct RunSummary {
  std::string out_dir;
  TheoryCertificate cert;
  Matrix K_final;
  Matrix K_lqr;
  Matrix K_expert;
  std::map<std::string, EvalReport> eval;  ///< learned, lqr, expert, detuned
  std::vector<std::string> files;

  bool all_pass() const { return cert.audit.all_pass(); }
};

inline Dataset generate_dataset(const ExperimentConfig& cfg) {
  InitialStateSpec init;
  init.kind = cfg.init;
  return generate_expert_dataset(cfg.system(), cfg.cost(), cfg.expert, cfg.episodes,
                                 cfg.horizon, cfg.pendulum, derive_seed(cfg.seed, 1), init);
}

inline LinearBCModel linear_bc(const ExperimentConfig& cfg, const Dataset& ds) {
  LinearFitOptions fit;
  if (cfg.bc_fit_unsaturated) fit.saturation_limit = cfg.pendulum.torque_limit;
  return fit_linear_bc(ds, fit);
}

inline FlowTrainResult flow_bc(const ExperimentConfig& cfg, const Dataset& ds) {
  FlowTrainConfig bc = cfg.bc;
  bc.seed = derive_seed(cfg.seed, 2);
  return train_flow_bc(ds, bc, cfg.W_z());
}

/// Trainer stage: the BC model named by trainer.bc_kind, K0 = linear BC gain.
inline TrainResult train_policy(const ExperimentConfig& cfg, const Dataset& ds,
                                const LinearBCModel& lin, const FlowTrainResult* flow) {
  const TrainerConfig tc = cfg.trainer_config();
  BCPolicy bc = lin;
  if (tc.bc_kind == BCKind::flow) {
    if (!flow) throw ConfigError("trainer.bc_kind=flow requires a trained flow BC policy");
    bc = flow->policy;
  }
  return train_one_step_policy(tc, ds, bc, cfg.system(), cfg.cost(), lin.K_b);
}

/// Data generation, BC, critic, one-step policy training, certificate and
/// evaluation, writing every artifact under cfg.out.
inline RunSummary run_experiment(const ExperimentConfig& cfg) {
  RunSummary s;
  s.out_dir = cfg.out;
  detail::ensure_dir(cfg.out);
  const auto path = [&](const char* f) {
    s.files.emplace_back(f);
    return detail::out_path(cfg.out, f);
  };
  const LinearSystem sys = cfg.system();
  const QuadraticCost cost = cfg.cost();

  const Dataset ds = detail::run_stage("dataset", [&] {
    Dataset d = generate_dataset(cfg);
    save_dataset(d, path("dataset.csv"));
    return d;
  });

  const FlowTrainResult flow = detail::run_stage("bc", [&] {
    FlowTrainResult f = flow_bc(cfg, ds);
    auto out = csv::open_for_write(path("bc_loss.csv"));
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < f.loss_trace.size(); ++e) {
      out << e << ',' << csv::real(f.loss_trace[e]) << '\n';
    }
    save_velocity_net(f.policy.net, path("bc_net.csv"));
    return f;
  });
  const LinearBCModel lin = detail::run_stage("bc", [&] {
    LinearBCModel l = linear_bc(cfg, ds);
    csv::write_matrix(path("bc_linear.csv"), l.K_b);
    return l;
  });

  detail::run_stage("critic", [&] {
    CriticTrainConfig cc = cfg.critic;
    cc.seed = derive_seed(cfg.seed, 3);
    const auto res = train_critic(ds, GainPolicy{lin.K_b, cfg.W_z()}, cc,
                                  CriticWeights::zeros(ds.n, ds.m));
    save_critic(res.critic, path("critic.csv"));
    return 0;
  });

  const TrainResult tr = detail::run_stage("trainer", [&] {
    TrainResult r = train_policy(cfg, ds, lin, &flow);
    write_certificate(path("certificate.csv"), r.trace, r.cert);
    auto out = csv::open_for_write(path("grad_norm.csv"));
    out << "iter,grad_fro\n";
    for (const auto& rec : r.trace) out << rec.iter << ',' << csv::real(rec.grad_fro) << '\n';
    csv::write_matrix(path("policy.csv"), r.K_final);
    return r;
  });
  s.cert = tr.cert;
  s.K_final = tr.K_final;

  detail::run_stage("eval", [&] {
    s.K_lqr = optimal_lqr_gain(sys, cost);
    s.K_expert = expert_gain(sys, cost, cfg.expert);
    const EvalEnv env = EvalEnv::pendulum(cfg.eval.env, cfg.pendulum);
    const std::uint64_t seed = derive_seed(cfg.seed, 5);
    const std::vector<std::pair<std::string, Matrix>> gains{
        {"learned", s.K_final},
        {"lqr", s.K_lqr},
        {"expert", s.K_expert},
        {"detuned", cfg.eval.detune * s.K_lqr}};
    for (const auto& [name, K] : gains) {
      s.eval[name] = rollout_eval(env, cost, GainPolicy{K, cfg.W_z()}, cfg.eval.rollouts,
                                  cfg.eval.horizon, seed);
    }
    auto out = csv::open_for_write(path("eval_costs.csv"));
    out << "rollout";
    for (const auto& g : gains) out << ',' << g.first;
    out << '\n';
    for (int r = 0; r < cfg.eval.rollouts; ++r) {
      out << r;
      for (const auto& g : gains) out << ',' << csv::real(s.eval[g.first].costs[r]);
      out << '\n';
    }
    auto sum = csv::open_for_write(path("eval_summary.csv"));
    sum << "policy,mean,std,ci_low,ci_high\n";
    for (const auto& g : gains) {
      const auto& e = s.eval[g.first];
      sum << g.first << ',' << csv::real(e.mean) << ',' << csv::real(e.std) << ','
          << csv::real(e.ci_low) << ',' << csv::real(e.ci_high) << '\n';
    }
    return 0;
  });

  // Manifest: config echo, versions, seed and audit outcome; no timestamps.
  {
    auto out = csv::open_for_write(path("manifest.txt"));
    out << "fpg " << kVersion << '\n';
    out << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
        << EIGEN_MINOR_VERSION << '\n';
#ifdef __VERSION__
    out << "compiler " << __VERSION__ << '\n';
#endif
    out << "seed " << cfg.seed << '\n';
    out << "audit " << (s.all_pass() ? "pass" : "fail") << '\n';
    for (const auto& f : failing_audits(s.cert.audit)) out << "failed_audit " << f << '\n';
    out << "files";
    for (const auto& f : s.files) out << ' ' << f;
    out << '\n';
    out << "[config]\n";
    for (const auto& line : config_echo(cfg)) out << line << '\n';
    if (!out) throw IoError("write failed for manifest.txt");
  }
  return s;
}

/// Theory audits only: dataset, BC (flow only when the trainer uses it) and the
/// one-step policy run. Writes certificate.csv under cfg.out.
inline TheoryCertificate verify_experiment(const ExperimentConfig& cfg) {
  detail::ensure_dir(cfg.out);
  const Dataset ds = detail::run_stage("dataset", [&] { return generate_dataset(cfg); });
  const LinearBCModel lin = detail::run_stage("bc", [&] { return linear_bc(cfg, ds); });
  std::optional<FlowTrainResult> flow;
  if (cfg.trainer.bc_kind == BCKind::flow) {
    flow = detail::run_stage("bc", [&] { return flow_bc(cfg, ds); });
  }
  return detail::run_stage("trainer", [&] {
    const TrainResult r = train_policy(cfg, ds, lin, flow ? &*flow : nullptr);
    write_certificate(detail::out_path(cfg.out, "certificate.csv"), r.trace, r.cert);
    return r.cert;
  });
}

// ---------------------------------------------------------------------------
// Exit status

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitAudit = 4;

/// Process exit status for an error escaping a pipeline stage.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const StepSizeError*>(&e) ||
      dynamic_cast<const InputError*>(&e) || dynamic_cast<const ParseError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const InstabilityError*>(&e) || dynamic_cast<const NoSolutionError*>(&e) ||
      dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const MomentDegeneracyError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return kExitNumeric;
  }
  return kExitOther;
}

// ---------------------------------------------------------------------------
// Report

struct ReportSummary {
  std::vector<std::string> lines;
  bool audits_pass = true;
};

/// Human-readable digest of the CSVs in a run directory.
inline ReportSummary report_directory(const std::string& dir) {
  ReportSummary rep;
  const auto file = [&](const char* f) { return detail::out_path(dir, f); };
  bool any = false;
  if (std::filesystem::exists(file("certificate.csv"))) {
    any = true;
    for (const auto& line : csv::read_lines(file("certificate.csv"))) {
      if (line.empty()) break;
      const auto f = csv::split(line);
      if (f.size() < 2) continue;
      if (f[0] == "dominance_pass_exact" || f[0] == "rate_pass" || f[0] == "stability_pass") {
        if (f[1] == "0") rep.audits_pass = false;
      }
      rep.lines.push_back("certificate " + f[0] + " = " + line.substr(f[0].size() + 1));
    }
  }
  const auto first_last = [&](const char* name, std::size_t column) {
    if (!std::filesystem::exists(file(name))) return;
    any = true;
    const auto lines = csv::read_lines(file(name));
    if (lines.size() < 2) return;
    const auto first = csv::split(lines[1]);
    const auto last = csv::split(lines.back());
    if (first.size() <= column || last.size() <= column) return;
    rep.lines.push_back(std::string(name) + " rows = " + std::to_string(lines.size() - 1) +
                        ", first = " + first[column] + ", last = " + last[column]);
  };
  first_last("bc_loss.csv", 1);
  first_last("grad_norm.csv", 1);
  if (std::filesystem::exists(file("eval_summary.csv"))) {
    any = true;
    const auto lines = csv::read_lines(file("eval_summary.csv"));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = csv::split(lines[i]);
      if (f.size() != 5) throw ParseError("eval_summary.csv: expected 5 fields", i + 1);
      rep.lines.push_back("eval " + f[0] + ": mean = " + f[1] + ", 95% interval = [" + f[3] +
                          ", " + f[4] + "]");
    }
  }
  if (!any) throw IoError("no run artifacts found in '" + dir + "'");
  return rep;
}

}  // namespace fpg

#endif  // FPG_BENCH_HPP
