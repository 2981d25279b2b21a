#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "hsrl/hpn/checkpoint.hpp"
#include "hsrl/hpn/policy.hpp"
#include "hsrl/numerics/errors.hpp"
#include "support/oracles.hpp"

using namespace hsrl;
using namespace hsrl::hpn;
using numerics::Tensor;

namespace {

std::vector<ItemId> catalog(std::size_t n) {
  std::vector<ItemId> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

PolicyNetwork make(std::vector<std::size_t> vocab, std::uint64_t seed, bool hierarchical = true,
                   std::size_t d_model = 8) {
  PolicyConfig c;
  c.d_model = d_model;
  c.vocab_sizes = std::move(vocab);
  c.hierarchical = hierarchical;
  return PolicyNetwork(c, catalog(20), seed);
}

UserState some_state() {
  UserState s;
  s.history = {{3, true}, {7, false}, {11, true}};
  return s;
}

void zero_heads(PolicyNetwork& p) {
  for (std::size_t l = 0; l < p.levels(); ++l) {
    Tensor h = p.head(l);
    for (double& v : h.mutable_data()) v = 0.0;
  }
}

PolicyOutput manual_output(const std::vector<std::vector<double>>& dists) {
  PolicyOutput out;
  for (const auto& d : dists) {
    out.probs.push_back(Tensor::vector(d));
    std::vector<double> lp;
    for (double v : d) lp.push_back(v > 0.0 ? std::log(v) : -1e300);
    out.log_probs.push_back(Tensor::vector(lp));
  }
  return out;
}

double enumerate_mass(const PolicyOutput& out) {
  const auto a = out.distribution(0), b = out.distribution(1), c = out.distribution(2);
  double total = 0.0;
  for (double x : a)
    for (double y : b)
      for (double z : c) total += x * y * z;
  return total;
}

}  // namespace

TEST(Encoder, EmptyHistoryIsStartVector) {
  auto p = make({4, 4}, 1);
  Tensor c0 = p.encode_state(UserState{});
  EXPECT_EQ(c0.to_vector(), p.encoder().start_vector().to_vector());
}

TEST(Encoder, IdenticalStatesBitwiseIdentical) {
  auto p = make({4, 4}, 2);
  EXPECT_EQ(p.encode_state(some_state()).to_vector(), p.encode_state(some_state()).to_vector());
}

TEST(Encoder, GradientMatchesCentralDifferences) {
  auto p = make({4, 4}, 3);
  auto params = numerics::tensors_of(p.encoder_parameters());
  auto r = hsrl::testing::check_gradients(
      params, [&] { return numerics::sum(p.encode_state(some_state())); }, 12, 5);
  EXPECT_LT(r.worst, 1e-3);
  EXPECT_TRUE(r.nonzero);
}

TEST(Forward, ForcedOneHotPicksEmbeddingRowExactly) {
  auto p = make({5, 6, 7}, 4);
  ForwardOptions o;
  o.forced_tokens = {Token{2}, Token{5}, Token{0}};
  auto out = p.forward(p.encode_state(some_state()), o);
  for (std::size_t l = 0; l < 3; ++l) {
    const Token z = *o.forced_tokens[l];
    auto row = numerics::row(p.token_embedding(l), z).to_vector();
    EXPECT_EQ(out.expected[l].to_vector(), row) << "level " << l;
  }
}

TEST(Forward, SingleLevelShape) {
  auto p = make({6}, 5);
  auto out = p.act(some_state());
  EXPECT_EQ(out.contexts.size(), 2u);
  EXPECT_EQ(out.levels(), 1u);
}

TEST(Forward, ZeroHeadsGiveUniformLevels) {
  auto p = make({3, 5, 64}, 6);
  zero_heads(p);
  auto out = p.act(some_state());
  for (std::size_t l = 0; l < 3; ++l) {
    const double t = static_cast<double>(out.distribution(l).size());
    for (double v : out.distribution(l)) EXPECT_NEAR(v, 1.0 / t, 1e-15);
  }
}

TEST(Forward, ContextDimensionChecked) {
  auto p = make({4}, 7);
  EXPECT_THROW(p.forward(Tensor::vector({1, 2})), DimensionError);
}

TEST(SidLogProb, UniformProduct) {
  auto p = make({64, 64, 64}, 8);
  zero_heads(p);
  auto out = p.act(some_state());
  const double lp = sid_log_prob(out, SemanticId{{1, 40, 63}}).item();
  EXPECT_NEAR(lp, 3.0 * std::log(1.0 / 64.0), 1e-12);
  EXPECT_NEAR(std::exp(lp), 3.8147e-6, 1e-9);
}

TEST(SidLogProb, OneHotMatchIsZero) {
  auto p = make({4, 4, 4}, 9);
  ForwardOptions o;
  o.forced_tokens = {Token{1}, Token{2}, Token{3}};
  auto out = p.forward(p.encode_state(some_state()), o);
  EXPECT_EQ(sid_log_prob(out, SemanticId{{1, 2, 3}}).item(), 0.0);
}

TEST(SidLogProb, ExhaustiveEnumerationSumsToOne) {
  for (bool hierarchical : {true, false}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto p = make({4, 4, 4}, 100 + seed, hierarchical);
      auto out = p.act(some_state());
      EXPECT_NEAR(enumerate_mass(out), 1.0, 1e-9);
      double via_log = 0.0;
      for (Token a = 0; a < 4; ++a)
        for (Token b = 0; b < 4; ++b)
          for (Token c = 0; c < 4; ++c)
            via_log += std::exp(sid_log_prob(out, SemanticId{{a, b, c}}).item());
      EXPECT_NEAR(via_log, 1.0, 1e-9);
    }
  }
}

TEST(SampleSid, OneHotAndDeterminism) {
  auto out = manual_output({{0, 1, 0}, {0, 0, 1}});
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    EXPECT_EQ(sample_sid(out, rng).tokens, (std::vector<Token>{1, 2}));
  }
  auto soft = manual_output({{0.2, 0.3, 0.5}, {0.6, 0.4}});
  Rng a(3), b(3);
  EXPECT_EQ(sample_sid(soft, a), sample_sid(soft, b));
}

TEST(SampleSid, UniformFrequencies) {
  auto out = manual_output({{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}});
  Rng rng(21);
  std::map<SemanticId, int> counts;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[sample_sid(out, rng)];
  ASSERT_EQ(counts.size(), 16u);
  for (auto& [sid, c] : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 16.0, 0.005);
}

TEST(Scoring, CollisionsTieAndArgmaxFirst) {
  auto p = make({4, 4}, 10);
  auto out = p.act(some_state());
  Token a0 = 0, a1 = 0;
  for (Token z = 1; z < 4; ++z) {
    if (out.distribution(0)[z] > out.distribution(0)[a0]) a0 = z;
    if (out.distribution(1)[z] > out.distribution(1)[a1]) a1 = z;
  }
  const Token other = static_cast<Token>((a0 + 1) % 4);
  tokenizer::SidIndex index({{4, SemanticId{{other, 0}}},
                             {2, SemanticId{{other, 0}}},
                             {9, SemanticId{{a0, a1}}}});
  std::vector<ItemId> cands = {4, 2, 9};
  auto scored = score_candidates(out, index, cands);
  EXPECT_EQ(scored[0].item, 9u);
  EXPECT_EQ(scored[1].item, 2u);
  EXPECT_EQ(scored[2].item, 4u);
  EXPECT_EQ(scored[1].score, scored[2].score);
  for (const auto& s : scored) {
    EXPECT_NEAR(s.score, std::exp(sid_log_prob(out, index.encode(s.item)).item()), 1e-12);
  }
}

TEST(SelectSlate, GreedyFullAndDeterministic) {
  auto p = make({4, 4}, 11);
  auto out = p.act(some_state());
  std::vector<std::pair<ItemId, SemanticId>> a;
  for (ItemId i = 0; i < 10; ++i) {
    a.push_back({i, SemanticId{{static_cast<Token>(i % 4), static_cast<Token>(i / 4)}}});
  }
  tokenizer::SidIndex index(a);
  Rng rng(1);
  auto slate = select_slate(out, index, index.items(), 10, SlateMode::kGreedy, rng);
  auto scored = score_candidates(out, index, index.items());
  ASSERT_EQ(slate.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(slate[i], scored[i].item);
  EXPECT_EQ(select_slate(out, index, index.items(), 4, SlateMode::kGreedy, rng),
            select_slate(out, index, index.items(), 4, SlateMode::kGreedy, rng));
}

TEST(SelectSlate, DominantCandidateAlwaysSampled) {
  const double eps = 1e-4;
  auto out = manual_output({{1 - 3 * eps, eps, eps, eps}});
  tokenizer::SidIndex index({{0, SemanticId{{0}}}, {1, SemanticId{{1}}},
                             {2, SemanticId{{2}}}, {3, SemanticId{{3}}}});
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    auto slate = select_slate(out, index, index.items(), 2, SlateMode::kSample, rng);
    ASSERT_NE(std::find(slate.begin(), slate.end(), 0u), slate.end());
  }
}

TEST(Checkpoint, RoundTripAndShapeMismatch) {
  auto a = make({4, 4}, 12);
  auto b = make({4, 4}, 13);
  const auto path = std::filesystem::temp_directory_path() / "hsrl_test_policy.bin";
  save_checkpoint(path, a.parameters());
  auto params = b.parameters();
  restore_parameters(params, load_checkpoint(path));
  EXPECT_EQ(a.act(some_state()).snapshot(), b.act(some_state()).snapshot());
  auto c = make({4, 5}, 14);
  auto cp = c.parameters();
  const auto before = c.act(some_state()).snapshot();
  EXPECT_THROW(restore_parameters(cp, load_checkpoint(path)), ContractError);
  EXPECT_EQ(c.act(some_state()).snapshot(), before);
  auto d = make({4, 4, 4}, 15);
  auto dp = d.parameters();
  EXPECT_THROW(restore_parameters(dp, load_checkpoint(path)), ContractError);
  std::filesystem::remove(path);
}
