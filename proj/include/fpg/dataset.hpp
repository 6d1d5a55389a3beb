#ifndef FPG_DATASET_HPP
#define FPG_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fpg/csv.hpp"
#include "fpg/lqr.hpp"

namespace fpg {

/// SplitMix64 finaliser; used to derive independent per-episode / per-rollout seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/// Factor L with L L^T = W for a symmetric PSD W (zero eigenvalues allowed).
inline Matrix gaussian_factor(const Matrix& W) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(W));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

inline Vector standard_normal(Rng& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

/// Pendulum benchmark parameters. Defaults follow the benchmark description.
struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double damping = 0.0;
  double gravity = 10.0;
  double dt = 0.05;
  double torque_limit = 2.0;
  double speed_limit = 8.0;
  double noise_var = 1e-4;  ///< W_w = noise_var * I

  void validate() const {
    if (!(mass > 0) || !(length > 0) || !(dt >= 0) || !(torque_limit > 0) ||
        !(speed_limit > 0) || !(noise_var >= 0)) {
      throw InputError("PendulumParams: mass, length, limits must be > 0 and dt, noise >= 0");
    }
  }
};

/// Linearisation of the pendulum:
/// A = [[1, dt], [-(g/l) dt, 1 - b/(m l^2) dt]], B = [[0], [dt/(m l^2)]].
inline LinearSystem pendulum_system(const PendulumParams& p) {
  p.validate();
  const double inertia = p.mass * p.length * p.length;
  LinearSystem sys;
  sys.A.resize(2, 2);
  sys.A << 1.0, p.dt, -(p.gravity / p.length) * p.dt, 1.0 - (p.damping / inertia) * p.dt;
  sys.B.resize(2, 1);
  sys.B << 0.0, p.dt / inertia;
  sys.W_w = p.noise_var * Matrix::Identity(2, 2);
  return sys;
}

struct Transition {
  Vector x;
  Vector u;
  double c = 0.0;
  Vector x_next;

  friend bool operator==(const Transition& a, const Transition& b) {
    return a.x == b.x && a.u == b.u && a.c == b.c && a.x_next == b.x_next;
  }
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::string generator;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Replay buffer of expert transitions.
struct Dataset {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::vector<Transition> transitions;
  DatasetMeta meta;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.n == b.n && a.m == b.m && a.meta == b.meta && a.transitions == b.transitions;
  }
};

enum class ExpertKind {
  lqr,               ///< infinite-horizon LQR gain
  receding_horizon,  ///< first-stage gain of a finite-horizon LQ problem
};

struct ExpertSpec {
  ExpertKind kind = ExpertKind::receding_horizon;
  int horizon = 20;         ///< prediction horizon of the receding-horizon expert
  double noise_std = 0.05;  ///< Gaussian exploration noise added before clipping
};

enum class InitialStateKind {
  uniform_angle,  ///< theta ~ U[-pi, pi], theta_dot = 0
  origin,
  gaussian,  ///< x0 ~ N(0, covariance)
  fixed,     ///< x0 = state
};

struct InitialStateSpec {
  InitialStateKind kind = InitialStateKind::uniform_angle;
  Matrix covariance;  ///< used by InitialStateKind::gaussian
  Vector state;       ///< used by InitialStateKind::fixed
};

inline Matrix expert_gain(const LinearSystem& sys, const QuadraticCost& cost,
                          const ExpertSpec& expert) {
  switch (expert.kind) {
    case ExpertKind::lqr:
      return optimal_lqr_gain(sys, cost);
    case ExpertKind::receding_horizon:
      return finite_horizon_lqr_gain(sys, cost, expert.horizon);
  }
  throw InputError("expert_gain: unknown expert kind");
}

inline std::string to_string(ExpertKind kind) {
  return kind == ExpertKind::lqr ? "lqr" : "receding_horizon";
}

namespace detail {

inline Vector initial_state(const InitialStateSpec& init, Eigen::Index n, Rng& rng) {
  switch (init.kind) {
    case InitialStateKind::origin:
      return Vector::Zero(n);
    case InitialStateKind::gaussian:
      require_shape(init.covariance, n, n, "InitialStateSpec(covariance)");
      return gaussian_factor(init.covariance) * standard_normal(rng, n);
    case InitialStateKind::fixed:
      if (init.state.size() != n) throw DimensionError("InitialStateSpec(state): size mismatch");
      return init.state;
    case InitialStateKind::uniform_angle: {
      std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
      Vector x = Vector::Zero(n);
      x(0) = angle(rng);
      return x;
    }
  }
  return Vector::Zero(n);
}

inline void clip_in_place(Vector& v, double limit) {
  v = v.cwiseMax(-limit).cwiseMin(limit);
}

/// Clips the velocity component (index 1) of a pendulum-like state.
inline void clip_speed(Vector& x, double limit) {
  if (x.size() >= 2) x(1) = std::clamp(x(1), -limit, limit);
}

}  // namespace detail

/// Simulates the expert on the linear model with input and speed clipping and
/// records (x, u, c, x'). Episode e uses the seed derive_seed(seed, e), so the
/// dataset is a pure function of the arguments.
inline Dataset generate_expert_dataset(const LinearSystem& sys, const QuadraticCost& cost,
                                       const ExpertSpec& expert, int episodes, int horizon,
                                       const PendulumParams& limits, std::uint64_t seed,
                                       const InitialStateSpec& init = {}) {
  sys.validate();
  cost.validate(sys.n(), sys.m());
  if (episodes < 0 || horizon < 0) {
    throw InputError("generate_expert_dataset: episodes and horizon must be >= 0");
  }
  const Matrix K = expert_gain(sys, cost, expert);
  if (!is_stabilizing(sys.A, sys.B, K)) {
    throw InstabilityError("generate_expert_dataset: expert gain is not stabilizing");
  }
  const Matrix noise_factor = gaussian_factor(sys.W_w);

  Dataset ds;
  ds.n = sys.n();
  ds.m = sys.m();
  ds.meta.seed = seed;
  ds.meta.generator = to_string(expert.kind) + "_expert";
  ds.transitions.reserve(static_cast<std::size_t>(episodes) * horizon);

  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    Vector x = detail::initial_state(init, ds.n, rng);
    for (int k = 0; k < horizon; ++k) {
      Vector u = K * x;
      if (expert.noise_std > 0) u += expert.noise_std * standard_normal(rng, ds.m);
      detail::clip_in_place(u, limits.torque_limit);
      Vector next = sys.A * x + sys.B * u + noise_factor * standard_normal(rng, ds.n);
      detail::clip_speed(next, limits.speed_limit);
      ds.transitions.push_back({x, u, cost.stage(x, u), next});
      x = std::move(next);
    }
  }
  return ds;
}

struct Moments {
  Matrix sigma_D;  ///< E_D[x x^T]
  Vector mean_x;
  std::size_t count = 0;
};

inline Moments dataset_moments(const Dataset& ds) {
  if (ds.empty()) throw InputError("dataset_moments: empty dataset");
  Moments mo;
  mo.sigma_D = Matrix::Zero(ds.n, ds.n);
  mo.mean_x = Vector::Zero(ds.n);
  for (const auto& t : ds.transitions) {
    mo.sigma_D.noalias() += t.x * t.x.transpose();
    mo.mean_x += t.x;
  }
  const double inv = 1.0 / static_cast<double>(ds.size());
  mo.sigma_D = symmetrize(mo.sigma_D * inv);
  mo.mean_x *= inv;
  mo.count = ds.size();
  return mo;
}

/// Monte-Carlo estimate of E_{x~D, z~N(0,W_z)}[mu(x, z) x^T] for an arbitrary
/// sampler mu(x, z). With `antithetic`, each noise draw z is paired with -z.
template <class Sampler>
  requires std::invocable<const Sampler&, const Vector&, const Vector&>
Matrix bc_cross_moment(const Dataset& ds, const Sampler& mu, const Matrix& W_z,
                       int noise_samples, std::uint64_t seed, bool antithetic = false) {
  if (ds.empty()) throw InputError("bc_cross_moment: empty dataset");
  if (noise_samples < 1) throw InputError("bc_cross_moment: noise_samples must be >= 1");
  require_shape(W_z, ds.m, ds.m, "bc_cross_moment(W_z)");
  const Matrix factor = gaussian_factor(W_z);
  Rng rng(seed);
  Matrix acc = Matrix::Zero(ds.m, ds.n);
  std::size_t draws = 0;
  for (const auto& t : ds.transitions) {
    for (int s = 0; s < noise_samples; ++s) {
      const Vector z = factor * standard_normal(rng, ds.m);
      const Vector a = mu(t.x, z);
      if (a.size() != ds.m) throw DimensionError("bc_cross_moment: sampler output size");
      acc.noalias() += a * t.x.transpose();
      ++draws;
      if (antithetic) {
        acc.noalias() += mu(t.x, Vector(-z)) * t.x.transpose();
        ++draws;
      }
    }
  }
  return acc / static_cast<double>(draws);
}

// CSV layout:
//   n,m,seed,generator
//   <n>,<m>,<seed>,<generator>
//   x1..xn,u1..um,c,xn1..xnn      (column names)
//   one row per transition
inline void save_dataset(const Dataset& ds, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << "n,m,seed,generator\n";
  out << ds.n << ',' << ds.m << ',' << ds.meta.seed << ',' << ds.meta.generator << '\n';
  std::string names;
  for (Eigen::Index i = 0; i < ds.n; ++i) names += "x" + std::to_string(i + 1) + ",";
  for (Eigen::Index i = 0; i < ds.m; ++i) names += "u" + std::to_string(i + 1) + ",";
  names += "c";
  for (Eigen::Index i = 0; i < ds.n; ++i) names += ",xn" + std::to_string(i + 1);
  out << names << '\n';
  for (const auto& t : ds.transitions) {
    out << csv::join(t.x) << ',' << csv::join(t.u) << ',' << csv::real(t.c) << ','
        << csv::join(t.x_next) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.size() < 3) throw ParseError("truncated dataset header", lines.size() + 1);
  if (lines[0] != "n,m,seed,generator") {
    throw ParseError("expected header 'n,m,seed,generator'", 1);
  }
  const auto meta = csv::split(lines[1]);
  if (meta.size() != 4) throw ParseError("expected 4 metadata fields", 2);
  Dataset ds;
  ds.n = csv::parse_integer(meta[0], 2);
  ds.m = csv::parse_integer(meta[1], 2);
  if (ds.n < 1 || ds.m < 1) throw ParseError("dimensions must be positive", 2);
  try {
    ds.meta.seed = std::stoull(meta[2]);
  } catch (const std::exception&) {
    throw ParseError("bad seed '" + meta[2] + "'", 2);
  }
  ds.meta.generator = meta[3];

  const std::size_t width = static_cast<std::size_t>(2 * ds.n + ds.m + 1);
  if (csv::split(lines[2]).size() != width) {
    throw ParseError("column header has wrong width", 3);
  }
  for (std::size_t li = 3; li < lines.size(); ++li) {
    const std::size_t lineno = li + 1;
    if (lines[li].empty()) continue;
    const auto f = csv::split(lines[li]);
    if (f.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, found " +
                           std::to_string(f.size()),
                       lineno);
    }
    Transition t;
    t.x.resize(ds.n);
    t.u.resize(ds.m);
    t.x_next.resize(ds.n);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < ds.n; ++i) t.x(i) = csv::parse_real(f[k++], lineno);
    for (Eigen::Index i = 0; i < ds.m; ++i) t.u(i) = csv::parse_real(f[k++], lineno);
    t.c = csv::parse_real(f[k++], lineno);
    for (Eigen::Index i = 0; i < ds.n; ++i) t.x_next(i) = csv::parse_real(f[k++], lineno);
    ds.transitions.push_back(std::move(t));
  }
  return ds;
}

}  // namespace fpg

#endif  // FPG_DATASET_HPP
