#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpg/bench.hpp"

namespace {

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--seed", opts.seed, "Override the configured seed");
  cmd->add_option("--out", opts.out, "Override the output directory");
  cmd->add_option("--set", opts.overrides, "Override a config key (key=value), repeatable");
}

fpg::ExperimentConfig load(const std::string& path, const CommonOptions& opts) {
  fpg::ExperimentConfig cfg = fpg::load_config(path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw fpg::ConfigError("--set expects key=value, got '" + kv + "'");
    fpg::set_config_value(cfg, fpg::detail::trim(kv.substr(0, eq)),
                          fpg::detail::trim(kv.substr(eq + 1)));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.out = *opts.out;
  return cfg;
}

void print_eval(const std::string& name, const fpg::EvalReport& r) {
  std::printf("  %-8s mean %.6g  std %.6g  95%% [%.6g, %.6g]\n", name.c_str(), r.mean, r.std,
              r.ci_low, r.ci_high);
}

int audit_status(const fpg::AuditReport& audit) {
  const auto failing = fpg::failing_audits(audit);
  for (const auto& f : failing) std::fprintf(stderr, "audit failed: %s\n", f.c_str());
  return failing.empty() ? fpg::kExitOk : fpg::kExitAudit;
}

void print_certificate(const fpg::TheoryCertificate& c) {
  std::printf("  L %.6g  mu_exact %.6g  mu_paper %.6g  eta %.6g  rate %.6g\n", c.L, c.mu_exact,
              c.mu_paper, c.eta, c.rate_factor);
  std::printf("  dominance %s  rate %s  stability %s  (mu_paper violations: %d)\n",
              c.audit.dominance_exact.pass ? "pass" : "FAIL", c.audit.rate.pass ? "pass" : "FAIL",
              c.audit.stability.pass ? "pass" : "FAIL",
              static_cast<int>(c.audit.dominance_paper.violations.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow policy gradient for linear-quadratic regulation"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string cfg_path;
  std::string policy_path;
  std::string report_dir;

  auto* gen = app.add_subcommand("gen-data", "Generate the expert dataset");
  gen->add_option("config", cfg_path, "Config file")->required();
  add_common(gen, opts);

  auto* train = app.add_subcommand("train", "Run the full pipeline and write all artifacts");
  train->add_option("config", cfg_path, "Config file")->required();
  add_common(train, opts);

  auto* eval = app.add_subcommand("eval", "Evaluate a saved gain with rollouts");
  eval->add_option("config", cfg_path, "Config file")->required();
  eval->add_option("--policy", policy_path, "Gain matrix file")->required();
  add_common(eval, opts);

  auto* verify = app.add_subcommand("verify", "Theory audits only");
  verify->add_option("config", cfg_path, "Config file")->required();
  add_common(verify, opts);

  auto* report = app.add_subcommand("report", "Summarize the CSVs of a run directory");
  report->add_option("dir", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : fpg::kExitConfig;
  }

  try {
    if (*gen) {
      const auto cfg = load(cfg_path, opts);
      fpg::detail::ensure_dir(cfg.out);
      const auto ds = fpg::generate_dataset(cfg);
      const std::string path = fpg::detail::out_path(cfg.out, "dataset.csv");
      fpg::save_dataset(ds, path);
      std::printf("wrote %zu transitions to %s\n", ds.size(), path.c_str());
      return fpg::kExitOk;
    }
    if (*train) {
      const auto cfg = load(cfg_path, opts);
      const auto s = fpg::run_experiment(cfg);
      std::printf("run written to %s\n", s.out_dir.c_str());
      print_certificate(s.cert);
      for (const auto& [name, r] : s.eval) print_eval(name, r);
      return audit_status(s.cert.audit);
    }
    if (*eval) {
      const auto cfg = load(cfg_path, opts);
      const fpg::Matrix K = fpg::csv::read_matrix(policy_path);
      const auto env = fpg::EvalEnv::pendulum(cfg.eval.env, cfg.pendulum);
      const auto r = fpg::rollout_eval(env, cfg.cost(), fpg::GainPolicy{K, cfg.W_z()},
                                       cfg.eval.rollouts, cfg.eval.horizon,
                                       fpg::derive_seed(cfg.seed, 5));
      fpg::detail::ensure_dir(cfg.out);
      auto out = fpg::csv::open_for_write(fpg::detail::out_path(cfg.out, "eval_policy.csv"));
      out << "rollout,cost\n";
      for (std::size_t i = 0; i < r.costs.size(); ++i) {
        out << i << ',' << fpg::csv::real(r.costs[i]) << '\n';
      }
      print_eval("policy", r);
      return fpg::kExitOk;
    }
    if (*verify) {
      const auto cfg = load(cfg_path, opts);
      const auto cert = fpg::verify_experiment(cfg);
      print_certificate(cert);
      return audit_status(cert.audit);
    }
    if (*report) {
      const auto rep = fpg::report_directory(report_dir);
      for (const auto& line : rep.lines) std::printf("%s\n", line.c_str());
      if (!rep.audits_pass) {
        std::fprintf(stderr, "certificate records a failed audit\n");
        return fpg::kExitAudit;
      }
      return fpg::kExitOk;
    }
  } catch (const fpg::Error& e) {
    if (e.stage().empty()) {
      std::fprintf(stderr, "error: %s\n", e.what());
    } else {
      std::fprintf(stderr, "error in stage %s: %s\n", e.stage().c_str(), e.what());
    }
    return fpg::exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return fpg::kExitOther;
  }
  return fpg::kExitOther;
}
