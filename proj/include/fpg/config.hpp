#ifndef FPG_CONFIG_HPP
#define FPG_CONFIG_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fpg/bc_policy.hpp"
#include "fpg/critic.hpp"
#include "fpg/csv.hpp"
#include "fpg/dataset.hpp"
#include "fpg/trainer.hpp"

namespace fpg {

enum class EnvKind { linear_clipped, nonlinear_pendulum };

struct EvalConfig {
  EnvKind env = EnvKind::linear_clipped;
  int rollouts = 50;
  int horizon = 200;
  double detune = 0.2;  ///< detuned baseline gain = detune * K_lqr
};

/// Everything one pipeline run needs. Defaults reproduce the pendulum benchmark
/// (R_x = diag(1, 0.1), R_u = 0.001, W_w = 1e-4 I, W_z = 0.01 I, alpha = 0.1,
/// SGD at lr 1e-3 with batch 256 for 100 epochs, 200-step episodes).
struct ExperimentConfig {
  PendulumParams pendulum;
  Vector rx_diag = (Vector(2) << 1.0, 0.1).finished();
  double ru = 0.001;

  int episodes = 50;
  int horizon = 200;
  ExpertSpec expert;
  InitialStateKind init = InitialStateKind::uniform_angle;

  FlowTrainConfig bc;
  bool bc_fit_unsaturated = true;

  CriticTrainConfig critic;

  TrainerConfig trainer;
  double w_z = 0.01;  ///< W_z = w_z * I

  EvalConfig eval;

  std::uint64_t seed = 0;
  std::string out = "out";

  ExperimentConfig() { trainer.iterations = 500; }

  LinearSystem system() const { return pendulum_system(pendulum); }

  QuadraticCost cost() const {
    Matrix Rx = rx_diag.asDiagonal();
    return {Rx, Matrix::Constant(1, 1, ru)};
  }

  Matrix W_z() const { return w_z * Matrix::Identity(1, 1); }

  /// Trainer settings with W_z and the run seed filled in.
  TrainerConfig trainer_config() const {
    TrainerConfig t = trainer;
    t.W_z = W_z();
    t.seed = derive_seed(seed, 4);
    return t;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

inline double config_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
}

inline long config_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long i = std::stol(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
}

inline int config_count(const std::string& key, const std::string& v, long min = 0) {
  const long i = config_integer(key, v);
  if (i < min || i > 1000000000L) {
    throw ConfigError("'" + key + "': must be >= " + std::to_string(min));
  }
  return static_cast<int>(i);
}

inline double config_positive(const std::string& key, const std::string& v) {
  const double d = config_real(key, v);
  if (!(d > 0.0)) throw ConfigError("'" + key + "': must be > 0");
  return d;
}

inline double config_nonnegative(const std::string& key, const std::string& v) {
  const double d = config_real(key, v);
  if (!(d >= 0.0)) throw ConfigError("'" + key + "': must be >= 0");
  return d;
}

template <class Enum>
Enum config_choice(const std::string& key, const std::string& v,
                   const std::vector<std::pair<std::string, Enum>>& choices) {
  for (const auto& [name, value] : choices) {
    if (name == v) return value;
  }
  std::string allowed;
  for (const auto& c : choices) allowed += (allowed.empty() ? "" : "|") + c.first;
  throw ConfigError("'" + key + "': expected " + allowed + ", got '" + v + "'");
}

template <class Enum>
std::string choice_name(Enum value, const std::vector<std::pair<std::string, Enum>>& choices) {
  for (const auto& [name, e] : choices) {
    if (e == value) return name;
  }
  return "?";
}

inline const std::vector<std::pair<std::string, ExpertKind>> kExpertKinds{
    {"lqr", ExpertKind::lqr}, {"receding_horizon", ExpertKind::receding_horizon}};
inline const std::vector<std::pair<std::string, InitialStateKind>> kInitKinds{
    {"uniform_angle", InitialStateKind::uniform_angle}, {"origin", InitialStateKind::origin}};
inline const std::vector<std::pair<std::string, SampleMode>> kSampleModes{
    {"euler", SampleMode::euler}, {"one_step", SampleMode::one_step}};
inline const std::vector<std::pair<std::string, CriticLoss>> kCriticLosses{
    {"differential", CriticLoss::differential}, {"paper_literal", CriticLoss::paper_literal}};
inline const std::vector<std::pair<std::string, JHatMode>> kJHatModes{
    {"sgd", JHatMode::sgd}, {"running_average", JHatMode::running_average}};
inline const std::vector<std::pair<std::string, CriticMode>> kCriticModes{
    {"analytic", CriticMode::analytic}, {"learned", CriticMode::learned}};
inline const std::vector<std::pair<std::string, SMode>> kSModes{
    {"frozen", SMode::frozen}, {"reevaluated", SMode::reevaluated}};
inline const std::vector<std::pair<std::string, BCKind>> kBCKinds{
    {"linear", BCKind::linear}, {"flow", BCKind::flow}};
inline const std::vector<std::pair<std::string, EnvKind>> kEnvKinds{
    {"linear_clipped", EnvKind::linear_clipped},
    {"nonlinear_pendulum", EnvKind::nonlinear_pendulum}};
inline const std::vector<std::pair<std::string, bool>> kLinearFits{{"unsaturated", true},
                                                                   {"all", false}};

inline std::vector<double> config_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& f : csv::split(v)) out.push_back(config_real(key, trim(f)));
  if (out.empty()) throw ConfigError("'" + key + "': empty list");
  return out;
}

struct ConfigKey {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string list_string(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

/// Key table: setter and canonical printer for every recognised key.
inline const std::map<std::string, ConfigKey>& config_keys() {
  using E = ExperimentConfig;
  using S = const std::string&;
  static const std::map<std::string, ConfigKey> keys{
      {"seed", {[](E& c, S v) { c.seed = static_cast<std::uint64_t>(config_count("seed", v)); },
                [](const E& c) { return std::to_string(c.seed); }}},
      {"out", {[](E& c, S v) { c.out = v; }, [](const E& c) { return c.out; }}},

      {"system.mass", {[](E& c, S v) { c.pendulum.mass = config_positive("system.mass", v); },
                       [](const E& c) { return csv::real(c.pendulum.mass); }}},
      {"system.length",
       {[](E& c, S v) { c.pendulum.length = config_positive("system.length", v); },
        [](const E& c) { return csv::real(c.pendulum.length); }}},
      {"system.damping",
       {[](E& c, S v) { c.pendulum.damping = config_nonnegative("system.damping", v); },
        [](const E& c) { return csv::real(c.pendulum.damping); }}},
      {"system.gravity",
       {[](E& c, S v) { c.pendulum.gravity = config_real("system.gravity", v); },
        [](const E& c) { return csv::real(c.pendulum.gravity); }}},
      {"system.dt", {[](E& c, S v) { c.pendulum.dt = config_nonnegative("system.dt", v); },
                     [](const E& c) { return csv::real(c.pendulum.dt); }}},
      {"system.torque_limit",
       {[](E& c, S v) { c.pendulum.torque_limit = config_positive("system.torque_limit", v); },
        [](const E& c) { return csv::real(c.pendulum.torque_limit); }}},
      {"system.speed_limit",
       {[](E& c, S v) { c.pendulum.speed_limit = config_positive("system.speed_limit", v); },
        [](const E& c) { return csv::real(c.pendulum.speed_limit); }}},
      {"system.noise_var",
       {[](E& c, S v) { c.pendulum.noise_var = config_nonnegative("system.noise_var", v); },
        [](const E& c) { return csv::real(c.pendulum.noise_var); }}},

      {"cost.rx",
       {[](E& c, S v) {
          const auto d = config_list("cost.rx", v);
          if (d.size() != 2) throw ConfigError("'cost.rx': expected 2 diagonal entries");
          c.rx_diag = Eigen::Map<const Vector>(d.data(), 2);
        },
        [](const E& c) { return csv::join(c.rx_diag); }}},
      {"cost.ru", {[](E& c, S v) { c.ru = config_positive("cost.ru", v); },
                   [](const E& c) { return csv::real(c.ru); }}},

      {"dataset.episodes",
       {[](E& c, S v) { c.episodes = config_count("dataset.episodes", v, 1); },
        [](const E& c) { return std::to_string(c.episodes); }}},
      {"dataset.horizon", {[](E& c, S v) { c.horizon = config_count("dataset.horizon", v, 1); },
                           [](const E& c) { return std::to_string(c.horizon); }}},
      {"dataset.expert",
       {[](E& c, S v) { c.expert.kind = config_choice("dataset.expert", v, kExpertKinds); },
        [](const E& c) { return choice_name(c.expert.kind, kExpertKinds); }}},
      {"dataset.expert_horizon",
       {[](E& c, S v) { c.expert.horizon = config_count("dataset.expert_horizon", v, 1); },
        [](const E& c) { return std::to_string(c.expert.horizon); }}},
      {"dataset.noise_std",
       {[](E& c, S v) { c.expert.noise_std = config_nonnegative("dataset.noise_std", v); },
        [](const E& c) { return csv::real(c.expert.noise_std); }}},
      {"dataset.init", {[](E& c, S v) { c.init = config_choice("dataset.init", v, kInitKinds); },
                        [](const E& c) { return choice_name(c.init, kInitKinds); }}},

      {"bc.hidden",
       {[](E& c, S v) {
          c.bc.hidden.clear();
          for (double d : config_list("bc.hidden", v)) {
            if (d < 1 || d != std::floor(d)) throw ConfigError("'bc.hidden': positive integers");
            c.bc.hidden.push_back(static_cast<int>(d));
          }
        },
        [](const E& c) { return list_string(c.bc.hidden); }}},
      {"bc.lr", {[](E& c, S v) { c.bc.lr = config_positive("bc.lr", v); },
                 [](const E& c) { return csv::real(c.bc.lr); }}},
      {"bc.batch_size", {[](E& c, S v) { c.bc.batch_size = config_count("bc.batch_size", v, 1); },
                         [](const E& c) { return std::to_string(c.bc.batch_size); }}},
      {"bc.epochs", {[](E& c, S v) { c.bc.epochs = config_count("bc.epochs", v); },
                     [](const E& c) { return std::to_string(c.bc.epochs); }}},
      {"bc.mode", {[](E& c, S v) { c.bc.mode = config_choice("bc.mode", v, kSampleModes); },
                   [](const E& c) { return choice_name(c.bc.mode, kSampleModes); }}},
      {"bc.euler_steps",
       {[](E& c, S v) { c.bc.euler_steps = config_count("bc.euler_steps", v, 1); },
        [](const E& c) { return std::to_string(c.bc.euler_steps); }}},
      {"bc.linear_fit",
       {[](E& c, S v) { c.bc_fit_unsaturated = config_choice("bc.linear_fit", v, kLinearFits); },
        [](const E& c) { return choice_name(c.bc_fit_unsaturated, kLinearFits); }}},

      {"critic.lr", {[](E& c, S v) { c.critic.lr = config_nonnegative("critic.lr", v); },
                     [](const E& c) { return csv::real(c.critic.lr); }}},
      {"critic.batch_size",
       {[](E& c, S v) { c.critic.batch_size = config_count("critic.batch_size", v, 1); },
        [](const E& c) { return std::to_string(c.critic.batch_size); }}},
      {"critic.steps", {[](E& c, S v) { c.critic.steps = config_count("critic.steps", v); },
                        [](const E& c) { return std::to_string(c.critic.steps); }}},
      {"critic.tau",
       {[](E& c, S v) {
          c.critic.tau = config_real("critic.tau", v);
          if (!(c.critic.tau >= 0.0 && c.critic.tau <= 1.0)) {
            throw ConfigError("'critic.tau': must lie in [0, 1]");
          }
        },
        [](const E& c) { return csv::real(c.critic.tau); }}},
      {"critic.target_every",
       {[](E& c, S v) { c.critic.target_every = config_count("critic.target_every", v, 1); },
        [](const E& c) { return std::to_string(c.critic.target_every); }}},
      {"critic.loss",
       {[](E& c, S v) { c.critic.loss = config_choice("critic.loss", v, kCriticLosses); },
        [](const E& c) { return choice_name(c.critic.loss, kCriticLosses); }}},
      {"critic.j_hat", {[](E& c, S v) { c.critic.j_hat = config_choice("critic.j_hat", v, kJHatModes); },
                        [](const E& c) { return choice_name(c.critic.j_hat, kJHatModes); }}},

      {"trainer.alpha", {[](E& c, S v) { c.trainer.alpha = config_positive("trainer.alpha", v); },
                         [](const E& c) { return csv::real(c.trainer.alpha); }}},
      {"trainer.eta",
       {[](E& c, S v) {
          // "auto" (= 1/L), "<c>/L", or an absolute step.
          c.trainer.eta.reset();
          c.trainer.eta_scale = 1.0;
          if (v == "auto") return;
          if (v.size() > 2 && v.substr(v.size() - 2) == "/L") {
            c.trainer.eta_scale = config_positive("trainer.eta", v.substr(0, v.size() - 2));
            return;
          }
          c.trainer.eta = config_positive("trainer.eta", v);
        },
        [](const E& c) {
          if (c.trainer.eta) return csv::real(*c.trainer.eta);
          return c.trainer.eta_scale == 1.0 ? std::string("auto")
                                            : csv::real(c.trainer.eta_scale) + "/L";
        }}},
      {"trainer.iterations",
       {[](E& c, S v) { c.trainer.iterations = config_count("trainer.iterations", v); },
        [](const E& c) { return std::to_string(c.trainer.iterations); }}},
      {"trainer.critic_mode",
       {[](E& c, S v) { c.trainer.critic_mode = config_choice("trainer.critic_mode", v, kCriticModes); },
        [](const E& c) { return choice_name(c.trainer.critic_mode, kCriticModes); }}},
      {"trainer.s_mode",
       {[](E& c, S v) { c.trainer.s_mode = config_choice("trainer.s_mode", v, kSModes); },
        [](const E& c) { return choice_name(c.trainer.s_mode, kSModes); }}},
      {"trainer.bc_kind",
       {[](E& c, S v) { c.trainer.bc_kind = config_choice("trainer.bc_kind", v, kBCKinds); },
        [](const E& c) { return choice_name(c.trainer.bc_kind, kBCKinds); }}},
      {"trainer.w_z", {[](E& c, S v) { c.w_z = config_nonnegative("trainer.w_z", v); },
                       [](const E& c) { return csv::real(c.w_z); }}},
      {"trainer.noise_samples",
       {[](E& c, S v) {
          c.trainer.bc_moments.noise_samples = config_count("trainer.noise_samples", v, 1);
        },
        [](const E& c) { return std::to_string(c.trainer.bc_moments.noise_samples); }}},
      {"trainer.critic_steps_per_iteration",
       {[](E& c, S v) {
          c.trainer.critic_steps_per_iteration =
              config_count("trainer.critic_steps_per_iteration", v, 1);
        },
        [](const E& c) { return std::to_string(c.trainer.critic_steps_per_iteration); }}},

      {"eval.env", {[](E& c, S v) { c.eval.env = config_choice("eval.env", v, kEnvKinds); },
                    [](const E& c) { return choice_name(c.eval.env, kEnvKinds); }}},
      {"eval.rollouts", {[](E& c, S v) { c.eval.rollouts = config_count("eval.rollouts", v, 1); },
                         [](const E& c) { return std::to_string(c.eval.rollouts); }}},
      {"eval.horizon", {[](E& c, S v) { c.eval.horizon = config_count("eval.horizon", v, 1); },
                        [](const E& c) { return std::to_string(c.eval.horizon); }}},
      {"eval.detune", {[](E& c, S v) { c.eval.detune = config_real("eval.detune", v); },
                       [](const E& c) { return csv::real(c.eval.detune); }}},
  };
  return keys;
}

}  // namespace detail

/// Applies one key=value setting; unknown keys and malformed values raise ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  const auto& keys = detail::config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

/// Parses flat "section.key = value" text. '#' starts a comment; blank lines
/// are ignored; a repeated key is an error.
inline ExperimentConfig parse_config(const std::vector<std::string>& lines) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(i + 1) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "empty key or value");
    if (!seen.emplace(key, i + 1).second) {
      throw ConfigError(where + "duplicate key '" + key + "'");
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::vector<std::string> lines;
  try {
    lines = csv::read_lines(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(lines);
}

/// Canonical "key = value" echo of every setting, sorted by key.
inline std::vector<std::string> config_echo(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& [key, entry] : detail::config_keys()) out.push_back(key + " = " + entry.get(cfg));
  return out;
}

}  // namespace fpg

#endif  // FPG_CONFIG_HPP
