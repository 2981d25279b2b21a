#pragma once

// Synthetic catalog with planted semantic structure. Items sit around G
// well-separated cluster centers, every user prefers one cluster, and the
// logged slates come from a popularity-skewed logging policy, so the logs
// under-expose the less popular clusters.

#include <cstdint>
#include <vector>

#include "hsrl/env/records.hpp"
#include "hsrl/env/simulator.hpp"
#include "hsrl/tokenizer/codebook.hpp"

namespace hsrl::env {

struct SyntheticConfig {
  std::size_t num_items = 300;
  std::size_t clusters = 8;
  std::size_t dim = 16;
  std::size_t users = 400;
  std::size_t records_per_user = 12;
  std::size_t slate_size = 5;
  double separation = 5.0;  // stddev of cluster centers
  double spread = 0.5;      // stddev around a center
  double p_preferred = 0.8;
  double p_other = 0.1;
  // Cluster g is logged with weight (g + 1)^-popularity_skew.
  double popularity_skew = 1.0;
};

struct SyntheticData {
  std::vector<tokenizer::ItemEmbedding> embeddings;
  std::vector<LogRecord> records;
  std::vector<ItemId> catalog;             // 0..N-1
  std::vector<std::size_t> item_cluster;   // indexed by item id
};

// Item i belongs to cluster i mod G; user u prefers cluster u mod G.
std::size_t preferred_cluster(std::uint64_t user_id, std::size_t clusters);

SyntheticData generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// Ground-truth response of the planted users.
class SyntheticClickModel : public ClickModel {
 public:
  SyntheticClickModel(std::vector<std::size_t> item_cluster, std::size_t clusters,
                      double p_preferred, double p_other);

  std::vector<double> click_probabilities(
      const SessionState& session, std::span<const ItemId> slate) const override;

  std::size_t cluster_of(ItemId item) const;

 private:
  std::vector<std::size_t> item_cluster_;
  std::size_t clusters_;
  double p_preferred_;
  double p_other_;
};

}  // namespace hsrl::env
