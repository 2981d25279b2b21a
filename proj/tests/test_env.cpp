#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hsrl/env/records.hpp"
#include "hsrl/env/simulator.hpp"
#include "hsrl/env/synthetic.hpp"
#include "hsrl/numerics/errors.hpp"

using namespace hsrl;
using namespace hsrl::env;

namespace {

class ConstantClicks : public ClickModel {
 public:
  explicit ConstantClicks(double p) : p_(p) {}
  std::vector<double> click_probabilities(const SessionState&,
                                          std::span<const ItemId> slate) const override {
    return std::vector<double>(slate.size(), p_);
  }

 private:
  double p_;
};

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

std::vector<PoolEntry> pool() { return {{1, {}}, {2, {4, 5}}}; }

}  // namespace

TEST(Reward, DocumentedMapping) {
  std::vector<std::uint8_t> nine = {1, 1, 1, 0, 0, 0, 0, 0, 0};
  EXPECT_NEAR(reward_from_feedback(nine), 0.2, 1e-12);
  std::vector<std::uint8_t> all(5, 1), none(5, 0);
  EXPECT_DOUBLE_EQ(reward_from_feedback(all), 1.0);
  EXPECT_DOUBLE_EQ(reward_from_feedback(none), -0.2);
  EXPECT_THROW(reward_from_feedback({}), ContractError);
}

TEST(Step, PatienceRunsOut) {
  ConstantClicks never(0.0);
  EnvConfig c;
  c.slate_size = 2;
  Environment env(never, pool(), c);
  Rng rng(1);
  SessionState s = env.reset(rng);
  std::vector<ItemId> slate = {7, 8};
  std::size_t depth = 0;
  while (!s.done) {
    auto r = env.step(s, slate, rng);
    EXPECT_LT(r.next.patience, s.patience);
    s = r.next;
    ++depth;
  }
  EXPECT_EQ(depth, 3u);
  EXPECT_THROW(env.step(s, slate, rng), ContractError);
}

TEST(Step, HorizonCapAndPatienceRefresh) {
  ConstantClicks always(1.0);
  EnvConfig c;
  c.slate_size = 3;
  Environment env(always, pool(), c);
  Rng rng(2);
  SessionState s = env.reset(rng);
  std::vector<ItemId> slate = {1, 2, 3};
  std::size_t depth = 0;
  while (!s.done) {
    auto r = env.step(s, slate, rng);
    EXPECT_EQ(r.next.patience, c.patience);
    EXPECT_DOUBLE_EQ(r.reward, 1.0);
    s = r.next;
    ++depth;
  }
  EXPECT_EQ(depth, 20u);
}

TEST(Step, WrongSlateSizeAndBadConfig) {
  ConstantClicks half(0.5);
  EnvConfig c;
  Environment env(half, pool(), c);
  Rng rng(3);
  auto s = env.reset(rng);
  std::vector<ItemId> two = {1, 2};
  EXPECT_THROW(env.step(s, two, rng), ContractError);
  c.patience = 0;
  EXPECT_THROW(Environment(half, pool(), c), ConfigError);
  EXPECT_THROW(Environment(half, {}, EnvConfig{}).reset(rng), DataError);
}

TEST(Step, PropertiesOverRandomSessions) {
  ConstantClicks some(0.3);
  EnvConfig c;
  c.slate_size = 4;
  Environment env(some, pool(), c);
  Rng rng(4);
  for (int e = 0; e < 300; ++e) {
    auto s = env.reset(rng);
    ASSERT_FALSE(s.done);
    std::size_t depth = 0;
    std::vector<ItemId> slate = {10, 11, 12, 13};
    while (!s.done) {
      auto r = env.step(s, slate, rng);
      ASSERT_GE(r.reward, -0.2);
      ASSERT_LE(r.reward, 1.0);
      const bool clicked = std::any_of(r.feedback.begin(), r.feedback.end(), [](auto y) { return y; });
      if (!clicked) ASSERT_EQ(r.next.patience, s.patience - 1);
      else ASSERT_EQ(r.next.patience, c.patience);
      s = r.next;
      ++depth;
    }
    ASSERT_LE(depth, 20u);
  }
}

TEST(Reset, DeterministicAndColdStart) {
  ConstantClicks half(0.5);
  Environment env(half, pool(), EnvConfig{});
  Rng a(5), b(5);
  EXPECT_EQ(env.reset(a), env.reset(b));
  auto cold = env.start({9, {}});
  EXPECT_TRUE(cold.user.history.empty());
  EXPECT_EQ(cold.patience, 3u);
}

TEST(Records, RoundTrip) {
  std::vector<LogRecord> recs = {{1, {}, {3, 4}, {1, 0}}, {2, {3}, {5, 6}, {0, 0}}};
  auto p = std::filesystem::temp_directory_path() / "hsrl_test_records.tsv";
  write_records(p, recs);
  EXPECT_EQ(read_records(p), recs);
  std::filesystem::remove(p);
}

TEST(Ingest, SegmentationAndLabels) {
  std::string body;
  // user 1: 25 interactions, item i rated 4 when even, 3 when odd
  for (int i = 0; i < 25; ++i) {
    body += "1\t" + std::to_string(100 + i) + "\t" + (i % 2 ? "3" : "4") + "\t" +
            std::to_string(1000 + i) + "\n";
  }
  // user 2: exactly 10 interactions, listed out of time order
  for (int i = 9; i >= 0; --i) {
    body += "2\t" + std::to_string(200 + i) + "\t5\t" + std::to_string(i) + "\n";
  }
  auto p = temp_file("hsrl_test_ratings.tsv", body);
  auto r = ingest_ml1m_style(p);
  ASSERT_EQ(r.records.size(), 3u);
  const auto& first = r.records[0];
  EXPECT_EQ(first.user_id, 1u);
  EXPECT_TRUE(first.history.empty());
  EXPECT_EQ(first.slate.front(), 100u);
  EXPECT_EQ(first.labels[0], 1);
  EXPECT_EQ(first.labels[1], 0);
  // second record's history: positives of the first slate, capped at 10
  EXPECT_EQ(r.records[1].history, (std::vector<ItemId>{100, 102, 104, 106, 108}));
  EXPECT_EQ(r.records[2].user_id, 2u);
  EXPECT_EQ(r.records[2].slate.front(), 200u);
  auto again = ingest_ml1m_style(p);
  EXPECT_EQ(again.records, r.records);
  std::filesystem::remove(p);
}

TEST(Split, EarliestShareFirst) {
  std::vector<LogRecord> recs;
  for (ItemId i = 0; i < 10; ++i) recs.push_back({1, {}, {i}, {1}});
  auto [a, b] = split_records(recs, 0.8);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.front().slate.front(), 8u);
}

TEST(Synthetic, SingleClusterUsersIdentical) {
  SyntheticConfig c;
  c.num_items = 20;
  c.clusters = 1;
  c.users = 5;
  SyntheticClickModel m(std::vector<std::size_t>(20, 0), 1, 0.8, 0.1);
  std::vector<ItemId> slate = {1, 2, 3};
  SessionState s1, s2;
  s1.user_id = 0;
  s2.user_id = 4;
  EXPECT_EQ(m.click_probabilities(s1, slate), m.click_probabilities(s2, slate));
  EXPECT_NO_THROW(generate_synthetic(c, 1));
}

TEST(Synthetic, DeterministicAndWellFormed) {
  SyntheticConfig c;
  auto a = generate_synthetic(c, 9), b = generate_synthetic(c, 9);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.embeddings.size(), c.num_items);
  EXPECT_EQ(a.records.size(), c.users * c.records_per_user);
  for (const auto& r : a.records) {
    ASSERT_EQ(r.slate.size(), c.slate_size);
    ASSERT_LE(r.history.size(), kRecordHistoryLimit);
  }
  c.clusters = 0;
  EXPECT_THROW(generate_synthetic(c, 1), ConfigError);
}

TEST(Synthetic, OraclePolicyBeatsUniform) {
  SyntheticConfig c;
  auto data = generate_synthetic(c, 10);
  SyntheticClickModel model(data.item_cluster, c.clusters, c.p_preferred, c.p_other);
  Environment env(model, user_pool_from(data.records), EnvConfig{});
  auto mean_step_reward = [&](bool oracle) {
    Rng rng(oracle ? 1 : 2);
    double total = 0.0;
    std::size_t steps = 0;
    for (int e = 0; e < 1000; ++e) {
      auto s = env.reset(rng);
      const std::size_t g = preferred_cluster(s.user_id, c.clusters);
      while (!s.done) {
        std::vector<ItemId> slate;
        while (slate.size() < 5) {
          ItemId i = rng.uniform_int(c.num_items);
          if (oracle && data.item_cluster[i] != g) continue;
          if (std::find(slate.begin(), slate.end(), i) == slate.end()) slate.push_back(i);
        }
        auto r = env.step(s, slate, rng);
        total += r.reward;
        ++steps;
        s = r.next;
      }
    }
    return total / static_cast<double>(steps);
  };
  EXPECT_GE(mean_step_reward(true) - mean_step_reward(false), 0.3);
}

TEST(ResponseModel, MajorityFitOnAllPositive) {
  std::vector<LogRecord> recs;
  for (std::uint64_t u = 0; u < 30; ++u) recs.push_back({u, {}, {u % 6, (u + 1) % 6}, {1, 1}});
  ResponseModelConfig c;
  c.epochs = 20;
  std::vector<ItemId> catalog = {0, 1, 2, 3, 4, 5};
  auto m = fit_response_model(recs, catalog, c, 1);
  for (const auto& r : recs) {
    SessionState s;
    for (double p : m.click_probabilities(s, r.slate)) ASSERT_GT(p, 0.5);
  }
  auto again = fit_response_model(recs, catalog, c, 1);
  EXPECT_EQ(m.logits({}, recs[0].slate).to_vector(), again.logits({}, recs[0].slate).to_vector());
}

TEST(ResponseModel, HeldOutBeatsConstantBaseline) {
  SyntheticConfig c;
  auto data = generate_synthetic(c, 11);
  auto [train, held] = split_records(data.records, 0.8);
  ResponseModelConfig rc;
  auto m = fit_response_model(train, data.catalog, rc, 2, data.embeddings);
  double pos = 0, n = 0;
  for (const auto& r : train)
    for (auto y : r.labels) pos += y, n += 1;
  const double p = pos / n;
  double base = 0, count = 0;
  for (const auto& r : held)
    for (auto y : r.labels) base -= y ? std::log(p) : std::log(1 - p), count += 1;
  EXPECT_LT(log_loss(m, held), base / count);
}

TEST(ResponseModel, SaveLoadAndDistinctSimulators) {
  SyntheticConfig c;
  c.num_items = 30;
  c.clusters = 3;
  c.users = 30;
  auto data = generate_synthetic(c, 12);
  ResponseModelConfig rc;
  rc.epochs = 1;
  auto sims = fit_simulators(data.records, data.catalog, rc, 3);
  std::vector<ItemId> slate = {1, 2, 3, 4, 5};
  SessionState s;
  s.clicked = {7};
  EXPECT_NE(sims.train.click_probabilities(s, slate), sims.eval.click_probabilities(s, slate));
  auto p = std::filesystem::temp_directory_path() / "hsrl_test_sim.bin";
  save_response_model(p, sims.eval);
  auto loaded = load_response_model(p, rc, data.catalog);
  EXPECT_EQ(loaded.click_probabilities(s, slate), sims.eval.click_probabilities(s, slate));
  std::filesystem::remove(p);
}
