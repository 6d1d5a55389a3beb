#ifndef FPG_BC_POLICY_HPP
#define FPG_BC_POLICY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fpg/csv.hpp"
#include "fpg/dataset.hpp"

namespace fpg {

/// Fully connected velocity field v(t, x, a) with tanh hidden layers and a
/// linear output layer. Input layout is [t; x; a], output has size m.
class VelocityNet {
 public:
  struct Layer {
    Matrix W;  // out x in
    Vector b;
  };

  /// Gradient with the same layout as the parameters.
  struct Gradient {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
  };

  VelocityNet() = default;

  /// `dims` = {1+n+m, hidden..., m}. Weights are Glorot-uniform, biases zero.
  VelocityNet(std::vector<int> dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw DimensionError("VelocityNet: need at least input and output dims");
    for (int d : dims_) {
      if (d < 1) throw DimensionError("VelocityNet: layer sizes must be positive");
    }
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l];
      const int out = dims_[l + 1];
      const double bound = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> uni(-bound, bound);
      Layer layer{Matrix(out, in), Vector::Zero(out)};
      for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) layer.W(i, j) = uni(rng);
      }
      layers_.push_back(std::move(layer));
    }
  }

  static VelocityNet for_problem(Eigen::Index n, Eigen::Index m, const std::vector<int>& hidden,
                                 std::uint64_t seed) {
    std::vector<int> dims{static_cast<int>(1 + n + m)};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(static_cast<int>(m));
    return VelocityNet(std::move(dims), seed);
  }

  const std::vector<int>& dims() const { return dims_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Eigen::Index input_dim() const { return dims_.front(); }
  Eigen::Index output_dim() const { return dims_.back(); }

  static Vector pack_input(double t, const Vector& x, const Vector& a) {
    Vector in(1 + x.size() + a.size());
    in(0) = t;
    in.segment(1, x.size()) = x;
    in.tail(a.size()) = a;
    return in;
  }

  Vector operator()(double t, const Vector& x, const Vector& a) const {
    return forward(pack_input(t, x, a));
  }

  Vector forward(const Vector& input) const {
    check_input(input);
    Vector h = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Vector z = layers_[l].W * h + layers_[l].b;
      h = is_hidden(l) ? Vector(z.array().tanh()) : z;
    }
    return h;
  }

  Gradient zero_gradient() const {
    Gradient g;
    for (const auto& layer : layers_) {
      g.dW.push_back(Matrix::Zero(layer.W.rows(), layer.W.cols()));
      g.db.push_back(Vector::Zero(layer.b.size()));
    }
    return g;
  }

  /// Forward pass, then accumulates d(loss)/d(params) into `grad` given
  /// d(loss)/d(output) computed by `output_grad(output)`. Returns the output.
  template <class OutputGrad>
  Vector backprop(const Vector& input, OutputGrad&& output_grad, Gradient& grad) const {
    check_input(input);
    std::vector<Vector> activations{input};
    activations.reserve(layers_.size() + 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Vector z = layers_[l].W * activations.back() + layers_[l].b;
      activations.push_back(is_hidden(l) ? Vector(z.array().tanh()) : std::move(z));
    }
    const Vector output = activations.back();
    Vector delta = output_grad(output);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (is_hidden(l)) {
        delta = (delta.array() * (1.0 - activations[l + 1].array().square())).matrix();
      }
      grad.dW[l].noalias() += delta * activations[l].transpose();
      grad.db[l] += delta;
      if (l > 0) delta = layers_[l].W.transpose() * delta;
    }
    return output;
  }

  void sgd_update(const Gradient& grad, double lr) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].W -= lr * grad.dW[l];
      layers_[l].b -= lr * grad.db[l];
    }
  }

  Eigen::Index parameter_count() const {
    Eigen::Index count = 0;
    for (const auto& layer : layers_) count += layer.W.size() + layer.b.size();
    return count;
  }

  /// Flattened parameters, layer by layer: W (column-major) then b.
  Vector flat_parameters() const {
    Vector out(parameter_count());
    Eigen::Index k = 0;
    for (const auto& layer : layers_) {
      out.segment(k, layer.W.size()) = Eigen::Map<const Vector>(layer.W.data(), layer.W.size());
      k += layer.W.size();
      out.segment(k, layer.b.size()) = layer.b;
      k += layer.b.size();
    }
    return out;
  }

  void set_flat_parameters(const Vector& p) {
    if (p.size() != parameter_count()) throw DimensionError("set_flat_parameters: size mismatch");
    Eigen::Index k = 0;
    for (auto& layer : layers_) {
      Eigen::Map<Vector>(layer.W.data(), layer.W.size()) = p.segment(k, layer.W.size());
      k += layer.W.size();
      layer.b = p.segment(k, layer.b.size());
      k += layer.b.size();
    }
  }

  static Vector flatten(const Gradient& g) {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l < g.dW.size(); ++l) total += g.dW[l].size() + g.db[l].size();
    Vector out(total);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.dW.size(); ++l) {
      out.segment(k, g.dW[l].size()) = Eigen::Map<const Vector>(g.dW[l].data(), g.dW[l].size());
      k += g.dW[l].size();
      out.segment(k, g.db[l].size()) = g.db[l];
      k += g.db[l].size();
    }
    return out;
  }

  bool parameters_finite() const {
    return std::all_of(layers_.begin(), layers_.end(), [](const Layer& layer) {
      return layer.W.allFinite() && layer.b.allFinite();
    });
  }

  friend bool operator==(const VelocityNet& a, const VelocityNet& b) {
    if (a.dims_ != b.dims_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      if (a.layers_[l].W != b.layers_[l].W || a.layers_[l].b != b.layers_[l].b) return false;
    }
    return true;
  }

 private:
  bool is_hidden(std::size_t l) const { return l + 1 < layers_.size(); }

  void check_input(const Vector& input) const {
    if (layers_.empty()) throw DimensionError("VelocityNet: network has no layers");
    if (input.size() != input_dim()) {
      throw DimensionError("VelocityNet: input size " + std::to_string(input.size()) +
                           ", expected " + std::to_string(input_dim()));
    }
  }

  std::vector<int> dims_;
  std::vector<Layer> layers_;
};

// Weights CSV: first line lists the layer sizes, then for each layer the rows
// of [W | b] in row-major order.
inline void save_velocity_net(const VelocityNet& net, const std::string& path) {
  auto out = csv::open_for_write(path);
  const auto& dims = net.dims();
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "," : "") << dims[i];
  out << '\n';
  for (const auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) out << csv::real(layer.W(i, j)) << ',';
      out << csv::real(layer.b(i)) << '\n';
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline VelocityNet load_velocity_net(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw ParseError("missing layer-size header", 1);
  std::vector<int> dims;
  for (const auto& f : csv::split(lines[0])) dims.push_back(static_cast<int>(csv::parse_integer(f, 1)));
  VelocityNet net(dims, 0);
  std::size_t li = 1;
  for (auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i, ++li) {
      if (li >= lines.size()) throw ParseError("truncated weights", li + 1);
      const auto f = csv::split(lines[li]);
      if (static_cast<Eigen::Index>(f.size()) != layer.W.cols() + 1) {
        throw ParseError("expected " + std::to_string(layer.W.cols() + 1) + " fields", li + 1);
      }
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) layer.W(i, j) = csv::parse_real(f[j], li + 1);
      layer.b(i) = csv::parse_real(f.back(), li + 1);
    }
  }
  return net;
}

/// One flow-matching training sample: the conditioning state, the target
/// action a1 (= u), and the noise (a0, t) paired with it.
struct FlowItem {
  Vector x;
  Vector a1;
  Vector a0;
  double t = 0.0;
};

/// Draws a0 ~ N(0, I_m), t ~ U[0, 1] for each (x, u) in order.
inline std::vector<FlowItem> draw_flow_items(std::span<const Transition> batch, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<FlowItem> items;
  items.reserve(batch.size());
  for (const auto& tr : batch) {
    FlowItem item{tr.x, tr.u, standard_normal(rng, tr.u.size()), 0.0};
    item.t = uni(rng);
    items.push_back(std::move(item));
  }
  return items;
}

inline std::vector<FlowItem> draw_flow_items(std::span<const Transition> batch,
                                             std::uint64_t seed) {
  Rng rng(seed);
  return draw_flow_items(batch, rng);
}

/// mean ||v(t, x, a_t) - (a1 - a0)||^2 with a_t = (1-t) a0 + t a1, for any
/// callable velocity field v(t, x, a).
template <class Velocity>
double flow_matching_loss_value(const Velocity& v, std::span<const FlowItem> items) {
  if (items.empty()) throw InputError("flow_matching_loss: empty batch");
  double total = 0.0;
  for (const auto& it : items) {
    const Vector at = (1.0 - it.t) * it.a0 + it.t * it.a1;
    total += (v(it.t, it.x, at) - (it.a1 - it.a0)).squaredNorm();
  }
  return total / static_cast<double>(items.size());
}

struct FlowLoss {
  double loss = 0.0;
  VelocityNet::Gradient grad;
};

/// Flow-matching loss of `net` on `items` together with its parameter gradient.
inline FlowLoss flow_matching_loss(const VelocityNet& net, std::span<const FlowItem> items) {
  if (items.empty()) throw InputError("flow_matching_loss: empty batch");
  FlowLoss out{0.0, net.zero_gradient()};
  const double scale = 1.0 / static_cast<double>(items.size());
  for (const auto& it : items) {
    if (it.x.size() + it.a1.size() + 1 != net.input_dim() || it.a1.size() != net.output_dim() ||
        it.a0.size() != it.a1.size()) {
      throw DimensionError("flow_matching_loss: item dimensions do not match the network");
    }
    const Vector at = (1.0 - it.t) * it.a0 + it.t * it.a1;
    const Vector target = it.a1 - it.a0;
    double item_loss = 0.0;
    net.backprop(VelocityNet::pack_input(it.t, it.x, at),
                 [&](const Vector& y) {
                   const Vector r = y - target;
                   item_loss = r.squaredNorm();
                   return Vector(2.0 * scale * r);
                 },
                 out.grad);
    out.loss += item_loss * scale;
  }
  return out;
}

/// Convenience overload: draws the noise from `seed`.
inline FlowLoss flow_matching_loss(const VelocityNet& net, std::span<const Transition> batch,
                                   std::uint64_t seed) {
  const auto items = draw_flow_items(batch, seed);
  return flow_matching_loss(net, items);
}

enum class SampleMode {
  one_step,  ///< mu(x, z) = v(1, x, z)
  euler,     ///< a <- z; a <- a + v(s/S, x, a)/S for s = 0..S-1
};

struct FlowBCPolicy {
  VelocityNet net;
  SampleMode mode = SampleMode::euler;
  int euler_steps = 10;
  Matrix W_z;
};

/// Noise-to-action map of the flow BC policy. Euler mode evaluates the field at
/// the left end point s/S of each sub-interval.
inline Vector bc_sample(const FlowBCPolicy& pol, const Vector& x, const Vector& z) {
  if (z.size() != pol.net.output_dim() || x.size() + z.size() + 1 != pol.net.input_dim()) {
    throw DimensionError("bc_sample: state/noise size does not match the network");
  }
  if (pol.mode == SampleMode::one_step) return pol.net(1.0, x, z);
  if (pol.euler_steps < 1) throw InputError("bc_sample: euler_steps must be >= 1");
  Vector a = z;
  const double h = 1.0 / pol.euler_steps;
  for (int s = 0; s < pol.euler_steps; ++s) a += h * pol.net(s * h, x, a);
  return a;
}

struct FlowTrainConfig {
  std::vector<int> hidden{64, 64};
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 100;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::euler;
  int euler_steps = 10;
};

struct FlowTrainResult {
  FlowBCPolicy policy;
  std::vector<double> loss_trace;  ///< mean minibatch loss per epoch
};

/// Seeded minibatch SGD on the flow-matching loss.
inline FlowTrainResult train_flow_bc(const Dataset& ds, const FlowTrainConfig& cfg,
                                     const Matrix& W_z) {
  if (ds.empty()) throw InputError("train_flow_bc: empty dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.lr >= 0)) {
    throw InputError("train_flow_bc: invalid batch size, epochs or learning rate");
  }
  FlowTrainResult result;
  result.policy.net = VelocityNet::for_problem(ds.n, ds.m, cfg.hidden, derive_seed(cfg.seed, 0));
  result.policy.mode = cfg.mode;
  result.policy.euler_steps = cfg.euler_steps;
  result.policy.W_z = W_z;

  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Transition> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(ds.transitions[order[i]]);
      const auto items = draw_flow_items(batch, rng);
      const FlowLoss fl = flow_matching_loss(result.policy.net, items);
      if (!std::isfinite(fl.loss)) {
        throw TrainingError("train_flow_bc: non-finite loss in epoch " + std::to_string(epoch));
      }
      result.policy.net.sgd_update(fl.grad, cfg.lr);
      sum += fl.loss;
      ++batches;
    }
    if (!result.policy.net.parameters_finite()) {
      throw TrainingError("train_flow_bc: non-finite parameters after epoch " +
                          std::to_string(epoch));
    }
    result.loss_trace.push_back(sum / batches);
  }
  return result;
}

/// Least-squares linear surrogate of the BC policy: mu_b(x, z) = K_b x + z.
struct LinearBCModel {
  Matrix K_b;
};

struct LinearFitOptions {
  /// When set, transitions whose action reached this magnitude in any component
  /// (i.e. were clipped by the actuator) are left out of the fit.
  std::optional<double> saturation_limit;
};

/// K_b = (sum u x^T)(sum x x^T)^{-1}.
inline LinearBCModel fit_linear_bc(const Dataset& ds, const LinearFitOptions& opts = {}) {
  Matrix xx = Matrix::Zero(ds.n, ds.n);
  Matrix ux = Matrix::Zero(ds.m, ds.n);
  std::size_t used = 0;
  for (const auto& t : ds.transitions) {
    if (opts.saturation_limit &&
        t.u.cwiseAbs().maxCoeff() >= *opts.saturation_limit * (1.0 - 1e-12)) {
      continue;
    }
    xx.noalias() += t.x * t.x.transpose();
    ux.noalias() += t.u * t.x.transpose();
    ++used;
  }
  if (used == 0) throw MomentDegeneracyError("fit_linear_bc: no usable transitions");
  xx /= static_cast<double>(used);
  ux /= static_cast<double>(used);
  if (min_eigenvalue(xx) < 1e-10) {
    throw MomentDegeneracyError("fit_linear_bc: state moment matrix is singular");
  }
  const Matrix K = xx.ldlt().solve(ux.transpose()).transpose();
  return {K};
}

using BCPolicy = std::variant<LinearBCModel, FlowBCPolicy>;

/// mu_b(x, z) for either BC representation.
inline Vector bc_action(const BCPolicy& bc, const Vector& x, const Vector& z) {
  if (const auto* lin = std::get_if<LinearBCModel>(&bc)) {
    if (lin->K_b.cols() != x.size() || lin->K_b.rows() != z.size()) {
      throw DimensionError("bc_action: K_b is " + shape_of(lin->K_b));
    }
    return lin->K_b * x + z;
  }
  return bc_sample(std::get<FlowBCPolicy>(bc), x, z);
}

/// Cross moment C_b = E[mu_b(x, z) x^T] and offset beta_b = E||z - mu_b(x, z)||^2.
struct BCMoments {
  Matrix C_b;
  double beta_b = 0.0;
};

struct BCMomentOptions {
  int noise_samples = 8;
  std::uint64_t seed = 0;
  bool antithetic = false;
};

/// For a linear BC model both moments are exact (C_b = K_b Sigma_D,
/// beta_b = Tr(K_b^T K_b Sigma_D)); a flow BC policy is sampled.
inline BCMoments bc_moments(const Dataset& ds, const BCPolicy& bc, const Matrix& W_z,
                            const BCMomentOptions& opts = {}) {
  if (ds.empty()) throw InputError("bc_moments: empty dataset");
  if (const auto* lin = std::get_if<LinearBCModel>(&bc)) {
    require_shape(lin->K_b, ds.m, ds.n, "bc_moments(K_b)");
    const Matrix sigma = dataset_moments(ds).sigma_D;
    return {lin->K_b * sigma, (lin->K_b.transpose() * lin->K_b * sigma).trace()};
  }
  const auto& flow = std::get<FlowBCPolicy>(bc);
  const auto sampler = [&](const Vector& x, const Vector& z) { return bc_sample(flow, x, z); };
  BCMoments out;
  out.C_b = bc_cross_moment(ds, sampler, W_z, opts.noise_samples, opts.seed, opts.antithetic);
  // Offset term, same noise stream.
  const Matrix factor = gaussian_factor(W_z);
  Rng rng(opts.seed);
  double acc = 0.0;
  std::size_t draws = 0;
  for (const auto& t : ds.transitions) {
    for (int s = 0; s < opts.noise_samples; ++s) {
      const Vector z = factor * standard_normal(rng, ds.m);
      acc += (z - sampler(t.x, z)).squaredNorm();
      ++draws;
      if (opts.antithetic) {
        acc += (-z - sampler(t.x, Vector(-z))).squaredNorm();
        ++draws;
      }
    }
  }
  out.beta_b = acc / static_cast<double>(draws);
  return out;
}

/// bc_cross_moment for the BC representations of this module.
inline Matrix bc_cross_moment(const Dataset& ds, const BCPolicy& bc, const Matrix& W_z,
                              int noise_samples, std::uint64_t seed, bool antithetic = false) {
  return bc_moments(ds, bc, W_z, {noise_samples, seed, antithetic}).C_b;
}

}  // namespace fpg

#endif  // FPG_BC_POLICY_HPP
