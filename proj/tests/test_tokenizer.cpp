#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "hsrl/env/synthetic.hpp"
#include "hsrl/numerics/errors.hpp"
#include "hsrl/tokenizer/codebook.hpp"
#include "support/oracles.hpp"

using namespace hsrl;
using namespace hsrl::tokenizer;

namespace {

std::vector<ItemEmbedding> random_items(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ItemEmbedding> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, hsrl::testing::random_vector(rng, dim)});
  return out;
}

FitResult fit(const std::vector<ItemEmbedding>& items, std::vector<std::size_t> vocab,
              std::uint64_t seed = 1) {
  FitOptions o;
  o.vocab_sizes = std::move(vocab);
  o.seed = seed;
  return fit_codebook(items, o);
}

// Mean squared norm of x minus the sum of its SID's centroids over the first
// `levels` levels, recomputed from scratch.
double brute_residual(const FitResult& r, const std::vector<ItemEmbedding>& items,
                      std::size_t levels) {
  double total = 0.0;
  for (const auto& item : items) {
    const SemanticId& sid = r.index.encode(item.item_id);
    std::vector<double> x = item.vector;
    for (std::size_t l = 0; l < levels; ++l) {
      auto c = r.codebook.centroids(l).row(sid[l]);
      for (std::size_t d = 0; d < x.size(); ++d) x[d] -= c[d];
    }
    for (double v : x) total += v * v;
  }
  return total / static_cast<double>(items.size());
}

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double n) { return n * (n - 1) / 2; };
  double sj = 0, sa = 0, sb = 0;
  for (auto& [k, v] : joint) sj += c2(v);
  for (auto& [k, v] : ra) sa += c2(v);
  for (auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  return (sj - expected) / (0.5 * (sa + sb) - expected);
}

}  // namespace

TEST(Fit, HandRunFourPoints) {
  std::vector<ItemEmbedding> items = {{0, {0.0}}, {1, {0.1}}, {2, {1.0}}, {3, {1.1}}};
  auto r = fit(items, {2, 2});
  const auto& l1 = r.codebook.centroids(0);
  EXPECT_NEAR(l1.data[0], 0.05, 1e-12);
  EXPECT_NEAR(l1.data[1], 1.05, 1e-12);
  const auto& l2 = r.codebook.centroids(1);
  EXPECT_NEAR(l2.data[0], -0.05, 1e-12);
  EXPECT_NEAR(l2.data[1], 0.05, 1e-12);
  EXPECT_EQ(r.index.encode(0).tokens, (std::vector<Token>{0, 0}));
  EXPECT_EQ(r.index.encode(1).tokens, (std::vector<Token>{0, 1}));
  EXPECT_EQ(r.index.encode(2).tokens, (std::vector<Token>{1, 0}));
  EXPECT_EQ(r.index.encode(3).tokens, (std::vector<Token>{1, 1}));
}

TEST(Fit, IdenticalEmbeddingsSingleCentroid) {
  std::vector<ItemEmbedding> items;
  for (ItemId i = 0; i < 5; ++i) items.push_back({i, {0.3, -1.2}});
  auto r = fit(items, {1});
  EXPECT_EQ(r.codebook.centroids(0).data, (std::vector<double>{0.3, -1.2}));
  EXPECT_DOUBLE_EQ(r.level_errors[0], 0.0);
}

TEST(Fit, VocabularyLargerThanCatalogIsAnError) {
  auto items = random_items(10, 3, 2);
  EXPECT_THROW(fit(items, {11}), VocabularyError);
}

TEST(Fit, ResidualErrorNonIncreasingAndMatchesRecount) {
  auto items = random_items(200, 6, 3);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t levels = 1; levels <= 4; ++levels) {
    auto r = fit(items, std::vector<std::size_t>(levels, 8));
    for (std::size_t l = 0; l < levels; ++l) {
      EXPECT_NEAR(r.level_errors[l], brute_residual(r, items, l + 1), 1e-9);
      if (l > 0) EXPECT_LE(r.level_errors[l], r.level_errors[l - 1] + 1e-12);
    }
    const double total = brute_residual(r, items, levels);
    EXPECT_LE(total, previous + 1e-12);
    previous = total;
  }
}

TEST(Fit, CatalogPartition) {
  auto items = random_items(150, 4, 4);
  auto r = fit(items, {6, 6});
  std::size_t covered = 0;
  std::set<ItemId> seen;
  for (const auto& [sid, bucket] : r.index.buckets()) {
    covered += bucket.size();
    for (ItemId i : bucket) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(covered, items.size());
  for (const auto& it : items) {
    auto bucket = r.index.decode(r.index.encode(it.item_id));
    EXPECT_NE(std::find(bucket.begin(), bucket.end(), it.item_id), bucket.end());
  }
}

TEST(Fit, DeterministicUnderSeed) {
  auto items = random_items(120, 5, 5);
  auto a = fit(items, {8, 4, 4}, 9);
  auto b = fit(items, {8, 4, 4}, 9);
  EXPECT_EQ(a.codebook, b.codebook);
  EXPECT_EQ(a.index, b.index);
  EXPECT_EQ(encode_codebook(a.codebook, a.index), encode_codebook(b.codebook, b.index));
}

TEST(Fit, SingleLevelIsNearestCentroid) {
  auto items = random_items(100, 3, 6);
  auto r = fit(items, {7});
  const auto& c = r.codebook.centroids(0);
  for (const auto& it : items) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c.rows; ++k) {
      double d = 0;
      for (std::size_t j = 0; j < 3; ++j) d += std::pow(it.vector[j] - c.row(k)[j], 2);
      if (d < best_d) best_d = d, best = k;
    }
    EXPECT_EQ(r.index.encode(it.item_id)[0], best);
  }
}

TEST(Fit, RecoversPlantedClusters) {
  env::SyntheticConfig cfg;
  auto data = env::generate_synthetic(cfg, 17);
  auto r = fit(data.embeddings, {8, 16, 16});
  std::vector<std::size_t> truth, got;
  for (const auto& e : data.embeddings) {
    truth.push_back(data.item_cluster[e.item_id]);
    got.push_back(r.index.encode(e.item_id)[0]);
  }
  EXPECT_GT(adjusted_rand_index(truth, got), 0.95);
}

TEST(AssignSid, ReproducesFittedSids) {
  auto items = random_items(80, 4, 7);
  auto r = fit(items, {5, 5});
  for (const auto& it : items) {
    EXPECT_EQ(assign_sid(r.codebook, it.vector), r.index.encode(it.item_id));
  }
}

TEST(AssignSid, ExactMatchAndTieBreak) {
  RowMatrix l1(2, 1), l2(2, 1);
  l1.data = {0.0, 2.0};
  l2.data = {-1.0, 0.0};
  Codebook book(1, {l1, l2});
  EXPECT_EQ(assign_sid(book, std::vector<double>{2.0}).tokens, (std::vector<Token>{1, 1}));
  EXPECT_EQ(assign_sid(book, std::vector<double>{1.0})[0], 0u);
}

TEST(SidIndex, DecodeContract) {
  SidIndex index({{7, SemanticId{{0, 1}}}, {3, SemanticId{{0, 1}}}, {5, SemanticId{{1, 0}}}});
  EXPECT_EQ(index.decode(SemanticId{{1, 0}}), (std::vector<ItemId>{5}));
  EXPECT_EQ(index.decode(SemanticId{{0, 1}}), (std::vector<ItemId>{3, 7}));
  EXPECT_TRUE(index.decode(SemanticId{{1, 1}}).empty());
  EXPECT_THROW(index.encode(4), LookupError);
}

TEST(CollisionReport, DistinctAndDegenerate) {
  SidIndex distinct({{0, SemanticId{{0}}}, {1, SemanticId{{1}}}});
  EXPECT_EQ(collision_report(distinct).colliding_sids, 0u);
  SidIndex same({{0, SemanticId{{0, 0}}}, {1, SemanticId{{0, 0}}}, {2, SemanticId{{0, 0}}}});
  auto r = collision_report(same);
  EXPECT_EQ(r.max_bucket, 3u);
  EXPECT_EQ(r.distinct_sids, 1u);
}

TEST(CollisionReport, UniformUsageEntropyIsLogT) {
  std::vector<std::pair<ItemId, SemanticId>> a;
  for (ItemId i = 0; i < 12; ++i) a.push_back({i, SemanticId{{static_cast<Token>(i % 4)}}});
  EXPECT_NEAR(collision_report(SidIndex(a)).level_entropy[0], std::log(4.0), 1e-12);
}

TEST(Persistence, RoundTrip) {
  auto items = random_items(60, 3, 8);
  auto r = fit(items, {4, 4, 4});
  const auto path = std::filesystem::temp_directory_path() / "hsrl_test_codebook.bin";
  save_codebook(path, r.codebook, r.index);
  auto loaded = load_codebook(path);
  EXPECT_EQ(loaded.codebook, r.codebook);
  EXPECT_EQ(loaded.index, r.index);
  std::filesystem::remove(path);
}

TEST(Persistence, CorruptMagicAndMissingBlock) {
  auto items = random_items(60, 3, 8);
  auto r = fit(items, {4, 4, 4});
  std::string bytes = encode_codebook(r.codebook, r.index);
  std::string bad = bytes;
  bad[0] ^= 0x5a;
  EXPECT_THROW(decode_codebook(bad), FormatError);
  // Keep the header that announces three levels but only two centroid blocks.
  const std::size_t header = bytes.size() - (4 * 3 * 3) * sizeof(double) - sizeof(std::uint64_t) -
                             60 * (sizeof(std::uint64_t) + 3 * sizeof(std::uint16_t));
  const std::string cut = bytes.substr(0, header + 2 * 4 * 3 * sizeof(double));
  try {
    decode_codebook(cut);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("centroid block 3"), std::string::npos) << e.what();
  }
}
