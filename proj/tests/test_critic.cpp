#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fpg/critic.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using fpg::CriticWeights;
using fpg::Dataset;
using fpg::GainPolicy;
using fpg::Matrix;
using fpg::Vector;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

using fpg::testing::behaviour_data;

TEST(Critic, FeatureLayout) {
  EXPECT_EQ(fpg::feature_dim(2, 1), 6);
  EXPECT_EQ(fpg::features(vec({1, 0}), vec({0})), vec({1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(fpg::features(vec({2, 3}), vec({5})), vec({4, 6, 10, 9, 15, 25}));
  EXPECT_THROW(fpg::features(Vector(0), vec({1})), fpg::DimensionError);
}

TEST(Critic, PackUnpackDuality) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = fpg::testing::random_dim(rng, 2, 6);
    const Matrix S = fpg::symmetrize(fpg::testing::random_matrix(rng, d, d));
    EXPECT_LT((fpg::unpack(fpg::pack(S), d) - S).norm(), 1e-15);
    const Vector xi = fpg::testing::random_matrix(rng, d, 1);
    const Vector x = xi.head(1);
    const Vector u = xi.tail(d - 1);
    EXPECT_NEAR(fpg::pack(S).dot(fpg::features(x, u)), 0.5 * xi.dot(S * xi), 1e-12);
  }
  EXPECT_THROW(fpg::unpack(Vector::Zero(5), 2), fpg::DimensionError);
}

TEST(Critic, AnalyticScalarWeights) {
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 1.0);
  const auto cost = fpg::testing::scalar_cost();
  const auto c = fpg::analytic_critic(sys, cost, GainPolicy{Matrix::Zero(1, 1), Matrix::Zero(1, 1)});
  EXPECT_LT((c.w - vec({2.0 / 3.0, 2.0 / 3.0, 7.0 / 6.0})).norm(), 1e-13);
  EXPECT_NEAR(c.j_hat, 4.0 / 3.0, 1e-13);
  const auto qp = fpg::q_params_from_critic(c);
  EXPECT_NEAR(qp.S_uu(0, 0), 7.0 / 3.0, 1e-13);
  EXPECT_NEAR(c.q_value(vec({1}), vec({1})), fpg::q_value(qp, vec({1}), vec({1})), 1e-13);
}

TEST(Critic, DecoupledControlHasNoCrossWeights) {
  fpg::LinearSystem sys{Matrix::Identity(2, 2) * 0.5, Matrix::Zero(2, 1), Matrix::Identity(2, 2)};
  fpg::QuadraticCost cost{Matrix::Identity(2, 2), Matrix::Identity(1, 1)};
  const auto c = fpg::analytic_critic(sys, cost, GainPolicy{Matrix::Zero(1, 2), Matrix::Zero(1, 1)});
  // Ordering over xi = (x1, x2, u): (x1x1, x1x2, x1u, x2x2, x2u, uu).
  EXPECT_EQ(c.w(2), 0.0);
  EXPECT_EQ(c.w(4), 0.0);
}

TEST(Critic, AnalyticCriticIsFixedPointOnNoiselessData) {
  std::mt19937_64 gen(2);
  auto inst = fpg::testing::random_stable_instance(gen, 2, 1, 0.8);
  inst.sys.W_w.setZero();
  const GainPolicy pol{inst.pol.K, Matrix::Zero(1, 1)};
  const auto ds = behaviour_data(inst.sys, inst.cost, inst.pol.K, 0.5, 256, 3);
  const auto critic = fpg::analytic_critic(inst.sys, inst.cost, pol);
  const auto step = fpg::critic_td_step(critic, critic, ds.transitions, pol, 0.1, 4);
  EXPECT_LE(step.loss, 1e-18);
  EXPECT_LT((step.critic.w - critic.w).norm(), 1e-12);
  EXPECT_LT(std::abs(step.critic.j_hat - critic.j_hat), 1e-12);
}

TEST(Critic, AnalyticCriticIsStationaryInExpectationWithNoise) {
  // With process and policy noise the TD residual has zero conditional mean at
  // the analytic critic, so the averaged gradient shrinks with the batch size.
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 0.1);
  const auto cost = fpg::testing::scalar_cost(1.0, 0.5);
  const GainPolicy pol{Matrix::Constant(1, 1, -0.2), Matrix::Constant(1, 1, 0.1)};
  const auto critic = fpg::analytic_critic(sys, cost, pol);
  const auto ds = behaviour_data(sys, cost, pol.K, 0.5, 200000, 5);
  const auto step = fpg::critic_td_step(critic, critic, ds.transitions, pol, 1.0, 6);
  EXPECT_LT((step.critic.w - critic.w).norm(), 2e-2);
  EXPECT_LT(std::abs(step.critic.j_hat - critic.j_hat), 1e-2);
}

TEST(Critic, ZeroLearningRateIsNoOp) {
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 0.1);
  const auto cost = fpg::testing::scalar_cost();
  const GainPolicy pol{Matrix::Constant(1, 1, -0.2), Matrix::Constant(1, 1, 0.1)};
  const auto ds = behaviour_data(sys, cost, pol.K, 0.5, 64, 7);
  auto c = CriticWeights::zeros(1, 1);
  c.w << 0.3, -0.1, 0.7;
  const auto step = fpg::critic_td_step(c, c, ds.transitions, pol, 0.0, 1);
  EXPECT_EQ(step.critic.w, c.w);
  EXPECT_GT(step.loss, 0.0);
  EXPECT_THROW(fpg::critic_td_step(c, CriticWeights::zeros(2, 1), ds.transitions, pol, 0.1, 1),
               fpg::DimensionError);
}

TEST(Critic, SoftUpdate) {
  auto a = CriticWeights::zeros(1, 1);
  auto b = CriticWeights::zeros(1, 1);
  b.w.setConstant(2.0);
  b.j_hat = 4.0;
  EXPECT_EQ(fpg::soft_update(a, b, 1.0).w, b.w);
  EXPECT_EQ(fpg::soft_update(a, b, 0.0).w, a.w);
  const auto half = fpg::soft_update(a, b, 0.5);
  EXPECT_EQ(half.w, Vector::Constant(3, 1.0));
  EXPECT_EQ(half.j_hat, 2.0);
  EXPECT_THROW(fpg::soft_update(a, b, 1.5), fpg::InputError);
  EXPECT_THROW(fpg::soft_update(a, b, -0.1), fpg::InputError);
}

fpg::CriticTrainConfig scalar_training_config() {
  fpg::CriticTrainConfig cfg;
  cfg.lr = 0.05;
  cfg.batch_size = 256;
  cfg.steps = 10000;
  cfg.tau = 0.05;
  cfg.target_every = 1;
  cfg.seed = 11;
  return cfg;
}

TEST(Critic, TdTrainingReachesAnalyticWeights) {
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 0.1);
  const auto cost = fpg::testing::scalar_cost();
  const GainPolicy pol{Matrix::Constant(1, 1, -0.2), Matrix::Constant(1, 1, 0.1)};
  const auto ds = behaviour_data(sys, cost, pol.K, 0.5, 20000, 8);
  const auto analytic = fpg::analytic_critic(sys, cost, pol);
  const auto res = fpg::train_critic(ds, pol, scalar_training_config(), CriticWeights::zeros(1, 1));
  EXPECT_LT((res.critic.w - analytic.w).norm() / analytic.w.norm(), 0.05);
  EXPECT_LT(std::abs(res.critic.j_hat - analytic.j_hat) / analytic.j_hat, 0.05);
}

TEST(Critic, RunningAverageAverageCost) {
  // One long on-policy trajectory: the running mean of stage costs tracks the
  // average cost.
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 0.1);
  const auto cost = fpg::testing::scalar_cost();
  const GainPolicy pol{Matrix::Constant(1, 1, -0.2), Matrix::Constant(1, 1, 0.1)};
  const auto ds = behaviour_data(sys, cost, pol.K, std::sqrt(0.1), 50000, 9, 50000);
  auto cfg = scalar_training_config();
  cfg.steps = 2000;
  cfg.j_hat = fpg::JHatMode::running_average;
  const auto res = fpg::train_critic(ds, pol, cfg, CriticWeights::zeros(1, 1));
  const double J = fpg::average_cost(sys, cost, pol);
  EXPECT_LT(std::abs(res.critic.j_hat - J) / J, 0.05);
}

TEST(Critic, LiteralResidualDiffersFromDifferential) {
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 0.1);
  const auto cost = fpg::testing::scalar_cost();
  const GainPolicy pol{Matrix::Constant(1, 1, -0.2), Matrix::Constant(1, 1, 0.1)};
  const auto ds = behaviour_data(sys, cost, pol.K, 0.5, 512, 10);
  const auto critic = fpg::analytic_critic(sys, cost, pol);
  const auto diff = fpg::critic_td_step(critic, critic, ds.transitions, pol, 0.0, 1,
                                        fpg::CriticLoss::differential);
  const auto lit = fpg::critic_td_step(critic, critic, ds.transitions, pol, 0.0, 1,
                                       fpg::CriticLoss::paper_literal);
  EXPECT_GT(lit.loss, diff.loss);
}

TEST(Critic, TrainingIsDeterministic) {
  const auto sys = fpg::testing::scalar_system(0.5, 1.0, 0.1);
  const auto cost = fpg::testing::scalar_cost();
  const GainPolicy pol{Matrix::Constant(1, 1, -0.2), Matrix::Constant(1, 1, 0.1)};
  const auto ds = behaviour_data(sys, cost, pol.K, 0.5, 1000, 12);
  auto cfg = scalar_training_config();
  cfg.steps = 50;
  const auto a = fpg::train_critic(ds, pol, cfg, CriticWeights::zeros(1, 1));
  const auto b = fpg::train_critic(ds, pol, cfg, CriticWeights::zeros(1, 1));
  EXPECT_EQ(a.critic.w, b.critic.w);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  cfg.lr = 1e6;
  EXPECT_THROW(fpg::train_critic(ds, pol, cfg, CriticWeights::zeros(1, 1)), fpg::TrainingError);
}

TEST(Critic, SaveLoadRoundTrip) {
  auto c = CriticWeights::zeros(2, 1);
  c.w << 1, 2, 3, 4, 5, 6.25;
  c.j_hat = 0.125;
  const auto path = (std::filesystem::temp_directory_path() / "fpg_test_critic.csv").string();
  fpg::save_critic(c, path);
  const auto back = fpg::load_critic(path);
  EXPECT_EQ(back.w, c.w);
  EXPECT_EQ(back.j_hat, c.j_hat);
  EXPECT_EQ(back.n, 2);
  std::filesystem::remove(path);
}

}  // namespace
