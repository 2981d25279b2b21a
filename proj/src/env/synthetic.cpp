#include "hsrl/env/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "hsrl/numerics/errors.hpp"
#include "hsrl/numerics/rng.hpp"

namespace hsrl::env {

std::size_t preferred_cluster(std::uint64_t user_id, std::size_t clusters) {
  return static_cast<std::size_t>(user_id % clusters);
}

SyntheticData generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  const std::size_t n = config.num_items;
  const std::size_t g = config.clusters;
  if (g == 0 || n < g) throw ConfigError("synthetic data needs N >= G >= 1");
  if (config.dim == 0) throw ConfigError("synthetic embedding dimension must be positive");
  if (config.slate_size == 0 || config.slate_size > n) {
    throw ConfigError("synthetic slate size must lie in [1, N]");
  }
  for (double p : {config.p_preferred, config.p_other}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("click probability outside [0, 1]");
  }

  SyntheticData out;
  Rng geometry = Rng(seed).derive(0);
  std::vector<std::vector<double>> centers(g, std::vector<double>(config.dim));
  for (auto& c : centers) {
    for (double& x : c) x = geometry.normal(0.0, config.separation);
  }
  std::vector<std::vector<ItemId>> members(g);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cluster = i % g;
    tokenizer::ItemEmbedding e;
    e.item_id = i;
    e.vector.resize(config.dim);
    for (std::size_t j = 0; j < config.dim; ++j) {
      e.vector[j] = centers[cluster][j] + geometry.normal(0.0, config.spread);
    }
    out.embeddings.push_back(std::move(e));
    out.catalog.push_back(i);
    out.item_cluster.push_back(cluster);
    members[cluster].push_back(i);
  }

  std::vector<double> cumulative(g);
  double total = 0.0;
  for (std::size_t c = 0; c < g; ++c) {
    total += std::pow(static_cast<double>(c + 1), -config.popularity_skew);
    cumulative[c] = total;
  }

  Rng logs = Rng(seed).derive(1);
  for (std::uint64_t user = 0; user < config.users; ++user) {
    const std::size_t liked = preferred_cluster(user, g);
    std::vector<ItemId> positives;
    for (std::size_t r = 0; r < config.records_per_user; ++r) {
      LogRecord rec;
      rec.user_id = user;
      const std::size_t keep = std::min(positives.size(), kRecordHistoryLimit);
      rec.history.assign(positives.end() - static_cast<std::ptrdiff_t>(keep),
                         positives.end());
      while (rec.slate.size() < config.slate_size) {
        const double u = logs.uniform() * total;
        const std::size_t cluster = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) -
            cumulative.begin());
        const auto& pool = members[std::min(cluster, g - 1)];
        const ItemId item = pool[logs.uniform_int(pool.size())];
        if (std::find(rec.slate.begin(), rec.slate.end(), item) != rec.slate.end()) {
          continue;
        }
        rec.slate.push_back(item);
      }
      for (ItemId item : rec.slate) {
        const double p =
            out.item_cluster[item] == liked ? config.p_preferred : config.p_other;
        const bool y = logs.bernoulli(p);
        rec.labels.push_back(y ? 1 : 0);
        if (y) positives.push_back(item);
      }
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

SyntheticClickModel::SyntheticClickModel(std::vector<std::size_t> item_cluster,
                                         std::size_t clusters, double p_preferred,
                                         double p_other)
    : item_cluster_(std::move(item_cluster)),
      clusters_(clusters),
      p_preferred_(p_preferred),
      p_other_(p_other) {
  if (clusters_ == 0) throw ConfigError("click model needs at least one cluster");
}

std::size_t SyntheticClickModel::cluster_of(ItemId item) const {
  if (item >= item_cluster_.size()) {
    throw LookupError("synthetic click model: unknown item " + std::to_string(item));
  }
  return item_cluster_[item];
}

std::vector<double> SyntheticClickModel::click_probabilities(
    const SessionState& session, std::span<const ItemId> slate) const {
  const std::size_t liked = preferred_cluster(session.user_id, clusters_);
  std::vector<double> out;
  out.reserve(slate.size());
  for (ItemId item : slate) {
    out.push_back(cluster_of(item) == liked ? p_preferred_ : p_other_);
  }
  return out;
}

}  // namespace hsrl::env
