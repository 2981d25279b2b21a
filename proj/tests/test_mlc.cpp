#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "hsrl/mlc/critic.hpp"
#include "hsrl/numerics/errors.hpp"
#include "support/oracles.hpp"

using namespace hsrl;
using namespace hsrl::mlc;
using numerics::Tensor;

namespace {

CriticConfig config(std::size_t levels = 3, bool per_level = false) {
  CriticConfig c;
  c.d_model = 6;
  c.hidden = 5;
  c.levels = levels;
  c.per_level_heads = per_level;
  return c;
}

std::vector<Tensor> trajectory(Rng& rng, std::size_t n, std::size_t d = 6) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(Tensor::parameter({d}, hsrl::testing::random_vector(rng, d)));
  }
  return out;
}

Tensor param(const Critic& c, const std::string& suffix) {
  for (const auto& p : c.parameters()) {
    if (p.name.size() >= suffix.size() &&
        p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return p.tensor;
    }
  }
  throw std::runtime_error("no parameter " + suffix);
}

void set(Tensor t, std::vector<double> v) {
  std::copy(v.begin(), v.end(), t.mutable_data().begin());
}

}  // namespace

TEST(PerLevelValues, ZeroWeightsGiveOutputBias) {
  Critic c(config(), 1);
  for (auto p : c.parameters()) {
    if (p.name.ends_with("out_w")) set(p.tensor, std::vector<double>(p.tensor.numel(), 0.0));
    if (p.name.ends_with("out_b")) set(p.tensor, {0.7});
  }
  Rng rng(1);
  for (double v : c.per_level_values(trajectory(rng, 4)).to_vector()) EXPECT_EQ(v, 0.7);
}

TEST(PerLevelValues, IdenticalContextsShareValue) {
  Critic c(config(), 2);
  Tensor ctx = Tensor::vector({0.1, -0.3, 0.5, 0.2, 0.0, 1.0});
  std::vector<Tensor> same(4, ctx);
  auto v = c.per_level_values(same).to_vector();
  for (double x : v) EXPECT_EQ(x, v[0]);
}

TEST(PerLevelValues, WrongTrajectoryLengthIsContractError) {
  Critic c(config(), 3);
  Rng rng(2);
  EXPECT_THROW(c.per_level_values(trajectory(rng, 3)), ContractError);
}

TEST(PerLevelValues, GradientMatchesCentralDifferences) {
  for (bool per_level : {false, true}) {
    Critic c(config(3, per_level), 4);
    Rng rng(3);
    auto traj = trajectory(rng, 4);
    auto params = numerics::tensors_of(c.parameters());
    auto r = hsrl::testing::check_gradients(
        params, [&] { return numerics::at(c.per_level_values(traj), 2); });
    EXPECT_LT(r.worst, 1e-3);
    EXPECT_TRUE(r.nonzero);
  }
}

TEST(Aggregate, UniformWeightsAverage) {
  Critic c(config(), 5);
  EXPECT_NEAR(c.aggregate(Tensor::vector({1, 2, 3, 4})).item(), 2.5, 1e-12);
  for (double w : c.weight_snapshot()) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Aggregate, DominantWeightAndShiftInvariance) {
  Critic c(config(), 6);
  Tensor w = param(c, "level_weights");
  Tensor v = Tensor::vector({1.5, -2, 3, 4});
  set(w, {10, -10, -10, -10});
  EXPECT_NEAR(c.aggregate(v).item(), 1.5, 1e-4);
  set(w, {0.3, -1.1, 2.0, 0.4});
  const double base = c.aggregate(v).item();
  set(w, {5.3, 3.9, 7.0, 5.4});
  EXPECT_NEAR(c.aggregate(v).item(), base, 1e-12);
}

TEST(Aggregate, GradientMatchesCentralDifferences) {
  Critic c(config(), 7);
  Rng rng(4);
  set(param(c, "level_weights"), hsrl::testing::random_vector(rng, 4));
  auto traj = trajectory(rng, 4);
  std::vector<Tensor> params = numerics::tensors_of(c.parameters());
  for (auto& t : traj) params.push_back(t);
  auto r = hsrl::testing::check_gradients(params, [&] { return c.value(traj); });
  EXPECT_LT(r.worst, 1e-3);
}

TEST(Aggregate, SingleLevelUsesOnlyFirstContext) {
  auto cfg = config();
  cfg.single_level = true;
  Critic c(cfg, 8);
  Rng rng(5);
  auto traj = trajectory(rng, 4);
  auto v = c.per_level_values(traj);
  EXPECT_DOUBLE_EQ(c.value(traj).item(), v[0]);
}

TEST(WeightSnapshot, AlwaysAProbabilityVector) {
  Critic c(config(4), 9);
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    set(param(c, "level_weights"), hsrl::testing::random_vector(rng, 5, 4.0));
    auto w = c.weight_snapshot();
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-9);
    for (double x : w) EXPECT_GE(x, 0.0);
  }
}

TEST(TargetSync, SoftExtremesAndHard) {
  Critic live(config(), 10), target(config(), 11);
  const auto before = numerics::tensors_of(target.parameters())[0].to_vector();
  sync_target(live, target, TargetSyncMode::kSoft, 0.0);
  EXPECT_EQ(numerics::tensors_of(target.parameters())[0].to_vector(), before);
  sync_target(live, target, TargetSyncMode::kSoft, 1.0);
  auto lp = numerics::tensors_of(live.parameters());
  auto tp = numerics::tensors_of(target.parameters());
  for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_EQ(lp[i].to_vector(), tp[i].to_vector());

  TargetSyncOptions o;
  o.mode = TargetSyncMode::kHard;
  o.period = 3;
  Critic moving(config(), 12);
  TargetCritic tc(moving, o);
  set(param(moving, "level_weights"), {1, 2, 3, 4});
  tc.on_step(moving);
  tc.on_step(moving);
  EXPECT_NE(tc.network().weight_snapshot(), moving.weight_snapshot());
  tc.on_step(moving);
  EXPECT_EQ(tc.network().weight_snapshot(), moving.weight_snapshot());
}

TEST(TargetSync, CloneIsIndependent) {
  Critic live(config(), 13);
  Critic copy = live.clone();
  set(param(live, "level_weights"), {1, 0, 0, 0});
  EXPECT_NE(copy.weight_snapshot(), live.weight_snapshot());
}
