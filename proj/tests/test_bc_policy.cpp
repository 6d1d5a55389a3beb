#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "fpg/bc_policy.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using fpg::Dataset;
using fpg::Matrix;
using fpg::Vector;
using fpg::VelocityNet;

using fpg::testing::linear_dataset;

TEST(BcPolicy, BackpropMatchesFiniteDifferences) {
  for (const auto& shape : {std::vector<int>{}, std::vector<int>{5}, std::vector<int>{6, 4}}) {
    for (Eigen::Index m : {1, 2}) {
      const Matrix K = fpg::testing::random_matrix(*std::make_unique<std::mt19937_64>(m), m, 2);
      const auto ds = linear_dataset(K, 7, 3);
      auto net = VelocityNet::for_problem(2, m, shape, 11);
      // Non-zero biases so their gradients are exercised away from the init.
      Vector p = net.flat_parameters();
      fpg::Rng rng(5);
      p += 0.1 * fpg::standard_normal(rng, p.size());
      net.set_flat_parameters(p);
      const auto items = fpg::draw_flow_items(ds.transitions, 17);
      const auto analytic = VelocityNet::flatten(fpg::flow_matching_loss(net, items).grad);
      const Vector numeric = fpg::testing::numeric_flow_gradient(net, items, 1e-5);
      EXPECT_LT((analytic - numeric).norm() / numeric.norm(), 1e-6);
    }
  }
}

TEST(BcPolicy, LossValueAndGradientAgree) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, 0.5), 9, 1);
  const auto net = VelocityNet::for_problem(2, 1, {8}, 2);
  const auto items = fpg::draw_flow_items(ds.transitions, 4);
  EXPECT_NEAR(fpg::flow_matching_loss(net, items).loss,
              fpg::flow_matching_loss_value(net, std::span<const fpg::FlowItem>(items)), 1e-14);
}

TEST(BcPolicy, OracleVelocityGivesZeroLoss) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, -0.7), 20, 2);
  const auto items = fpg::draw_flow_items(ds.transitions, 8);
  // The oracle knows each item's a0 and a1.
  std::size_t k = 0;
  const auto oracle = [&](double, const Vector&, const Vector&) {
    const auto& it = items[k++];
    return Vector(it.a1 - it.a0);
  };
  EXPECT_EQ(fpg::flow_matching_loss_value(oracle, std::span<const fpg::FlowItem>(items)), 0.0);
}

TEST(BcPolicy, ZeroNetworkLossIsMeanTargetNorm) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, -0.7), 20, 2);
  auto net = VelocityNet::for_problem(2, 1, {4}, 3);
  net.set_flat_parameters(Vector::Zero(net.parameter_count()));
  const auto items = fpg::draw_flow_items(ds.transitions, 8);
  double expected = 0.0;
  for (const auto& it : items) expected += (it.a1 - it.a0).squaredNorm();
  expected /= static_cast<double>(items.size());
  EXPECT_NEAR(fpg::flow_matching_loss(net, items).loss, expected, 1e-14);
}

TEST(BcPolicy, LossIsPermutationInvariant) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, 0.3), 16, 4);
  const auto net = VelocityNet::for_problem(2, 1, {8, 8}, 5);
  auto items = fpg::draw_flow_items(ds.transitions, 6);
  const double before = fpg::flow_matching_loss(net, items).loss;
  std::reverse(items.begin(), items.end());
  std::rotate(items.begin(), items.begin() + 5, items.end());
  EXPECT_NEAR(fpg::flow_matching_loss(net, items).loss, before, 1e-13);
}

TEST(BcPolicy, DimensionMismatch) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, 0.3), 4, 4);
  const auto net = VelocityNet::for_problem(3, 1, {4}, 5);
  EXPECT_THROW(fpg::flow_matching_loss(net, ds.transitions, 1), fpg::DimensionError);
}

TEST(BcPolicy, TrainingReducesLossOnLinearExpert) {
  // Pendulum states with an unclipped LQR expert, desk-scale network.
  fpg::PendulumParams p;
  p.torque_limit = 1e6;
  p.speed_limit = 1e6;
  const auto sys = fpg::pendulum_system(p);
  Matrix Rx = Matrix::Zero(2, 2);
  Rx.diagonal() << 1.0, 0.1;
  const fpg::QuadraticCost cost{Rx, Matrix::Constant(1, 1, 0.001)};
  const fpg::ExpertSpec expert{fpg::ExpertKind::lqr, 20, 0.05};
  const auto ds = fpg::generate_expert_dataset(sys, cost, expert, 20, 100, p, 1);
  fpg::FlowTrainConfig cfg;
  cfg.hidden = {64, 64};
  cfg.epochs = 50;
  cfg.lr = 3e-3;
  cfg.batch_size = 64;
  cfg.seed = 3;
  const auto res = fpg::train_flow_bc(ds, cfg, Matrix::Identity(1, 1));
  ASSERT_EQ(res.loss_trace.size(), 50u);
  EXPECT_LT(res.loss_trace.back(), 0.1 * res.loss_trace.front());
}

TEST(BcPolicy, TrainingDeterministicAndZeroEpochs) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, 0.3), 100, 8);
  fpg::FlowTrainConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 9;
  const auto a = fpg::train_flow_bc(ds, cfg, Matrix::Identity(1, 1));
  const auto b = fpg::train_flow_bc(ds, cfg, Matrix::Identity(1, 1));
  EXPECT_TRUE(a.policy.net == b.policy.net);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  cfg.epochs = 0;
  const auto init = fpg::train_flow_bc(ds, cfg, Matrix::Identity(1, 1));
  EXPECT_TRUE(init.policy.net == VelocityNet::for_problem(2, 1, {8}, fpg::derive_seed(9, 0)));
  EXPECT_TRUE(init.loss_trace.empty());
}

TEST(BcPolicy, DivergenceNamesEpoch) {
  const auto ds = linear_dataset(Matrix::Constant(1, 2, 30.0), 200, 8);
  fpg::FlowTrainConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 50;
  cfg.lr = 50.0;
  cfg.batch_size = 8;
  try {
    fpg::train_flow_bc(ds, cfg, Matrix::Identity(1, 1));
    FAIL() << "expected divergence";
  } catch (const fpg::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(BcPolicy, ZeroNetSampling) {
  fpg::FlowBCPolicy pol{VelocityNet::for_problem(2, 1, {4}, 1), fpg::SampleMode::euler, 10,
                        Matrix::Identity(1, 1)};
  pol.net.set_flat_parameters(Vector::Zero(pol.net.parameter_count()));
  const Vector x = Vector::Ones(2);
  const Vector z = Vector::Constant(1, 0.37);
  EXPECT_EQ(fpg::bc_sample(pol, x, z), z);
  pol.mode = fpg::SampleMode::one_step;
  EXPECT_EQ(fpg::bc_sample(pol, x, z), Vector::Zero(1));
}

TEST(BcPolicy, EulerConvergesToFlow) {
  // Linear field v(t, x, a) = target - a; exact flow a(1) = target + (z - target)/e.
  VelocityNet net({1 + 2 + 1, 1}, 0);
  net.layers()[0].W << 0.0, 0.0, 0.0, -1.0;
  const double target = 0.8;
  net.layers()[0].b << target;
  const Vector x = Vector::Zero(2);
  const Vector z = Vector::Constant(1, -1.5);
  const double exact = target + (z(0) - target) * std::exp(-1.0);
  double previous = 1e300;
  for (int steps : {1, 2, 5, 10, 50, 200}) {
    fpg::FlowBCPolicy pol{net, fpg::SampleMode::euler, steps, Matrix::Identity(1, 1)};
    const double err = std::abs(fpg::bc_sample(pol, x, z)(0) - exact);
    EXPECT_LT(err, previous);
    previous = err;
  }
  EXPECT_LT(previous, 1e-2);
}

TEST(BcPolicy, SaveLoadRoundTrip) {
  const auto net = VelocityNet::for_problem(2, 1, {5, 3}, 4);
  const auto path = (std::filesystem::temp_directory_path() / "fpg_test_net.csv").string();
  fpg::save_velocity_net(net, path);
  EXPECT_TRUE(fpg::load_velocity_net(path) == net);
  std::filesystem::remove(path);
}

TEST(BcPolicy, FitLinearExamples) {
  Dataset ds{1, 1, {}, {}};
  for (double x : {1.0, -2.0, 0.5}) {
    ds.transitions.push_back({Vector::Constant(1, x), Vector::Constant(1, -0.5 * x), 0.0, Vector::Zero(1)});
  }
  EXPECT_NEAR(fpg::fit_linear_bc(ds).K_b(0, 0), -0.5, 1e-15);

  Dataset two{2, 1, {}, {}};
  Vector e1 = Vector::Zero(2), e2 = Vector::Zero(2);
  e1(0) = 1.0;
  e2(1) = 1.0;
  two.transitions.push_back({e1, Vector::Constant(1, 1.0), 0.0, e1});
  two.transitions.push_back({e2, Vector::Constant(1, 2.0), 0.0, e2});
  const Matrix K = fpg::fit_linear_bc(two).K_b;
  EXPECT_NEAR(K(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(K(0, 1), 2.0, 1e-15);

  Dataset degenerate{2, 1, {}, {}};
  degenerate.transitions.push_back({e1, Vector::Constant(1, 1.0), 0.0, e1});
  EXPECT_THROW(fpg::fit_linear_bc(degenerate), fpg::MomentDegeneracyError);
}

TEST(BcPolicy, FitLinearRecoversGainAndOrthogonality) {
  std::mt19937_64 gen(12);
  const Matrix K = fpg::testing::random_matrix(gen, 2, 3);
  const auto ds = linear_dataset(K, 500, 13, 1e-8);
  const Matrix Kb = fpg::fit_linear_bc(ds).K_b;
  EXPECT_LT((Kb - K).norm(), 1e-6);
  const auto noisy = linear_dataset(K, 500, 14, 0.3);
  const Matrix Kn = fpg::fit_linear_bc(noisy).K_b;
  Matrix residual = Matrix::Zero(2, 3);
  for (const auto& t : noisy.transitions) residual += (t.u - Kn * t.x) * t.x.transpose();
  EXPECT_LT(residual.norm(), 1e-9);
}

TEST(BcPolicy, FitLinearSaturationFilter) {
  Dataset ds{1, 1, {}, {}};
  for (double x : {0.5, 1.0, 1.5, 3.0, 4.0}) {
    ds.transitions.push_back(
        {Vector::Constant(1, x), Vector::Constant(1, std::clamp(x, -2.0, 2.0)), 0.0, Vector::Zero(1)});
  }
  EXPECT_LT(fpg::fit_linear_bc(ds).K_b(0, 0), 0.9);
  fpg::LinearFitOptions opts;
  opts.saturation_limit = 2.0;
  EXPECT_NEAR(fpg::fit_linear_bc(ds, opts).K_b(0, 0), 1.0, 1e-15);
}

TEST(BcPolicy, MomentsForBothRepresentations) {
  std::mt19937_64 gen(15);
  const Matrix K = fpg::testing::random_matrix(gen, 1, 2);
  const auto ds = linear_dataset(K, 300, 16);
  const Matrix W = Matrix::Constant(1, 1, 0.2);
  const fpg::BCPolicy lin = fpg::LinearBCModel{K};
  const auto exact = fpg::bc_moments(ds, lin, W);
  const Matrix sigma = fpg::dataset_moments(ds).sigma_D;
  EXPECT_LT((exact.C_b - K * sigma).norm(), 1e-14);
  EXPECT_NEAR(exact.beta_b, (K.transpose() * K * sigma).trace(), 1e-14);

  // A flow policy whose one-step map is exactly K x + z reproduces the moments
  // up to sampling error; antithetic pairs remove the z term from C_b.
  VelocityNet net({1 + 2 + 1, 1}, 0);
  net.layers()[0].W << 0.0, K(0, 0), K(0, 1), 1.0;
  net.layers()[0].b.setZero();
  const fpg::BCPolicy flow = fpg::FlowBCPolicy{net, fpg::SampleMode::one_step, 10, W};
  const auto mc = fpg::bc_moments(ds, flow, W, {4, 1, true});
  EXPECT_LT((mc.C_b - K * sigma).norm(), 1e-12);
  EXPECT_NEAR(mc.beta_b, exact.beta_b, 1e-12);
}

}  // namespace
