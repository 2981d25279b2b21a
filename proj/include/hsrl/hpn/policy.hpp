#pragma once

// Hierarchical Policy Network.
//
// One forward pass turns the state context c_0 into L level-wise token
// distributions. After level l the context is refined by subtracting the
// expected token embedding under p_l and normalizing:
//
//   p_l = softmax(W_l c_{l-1})
//   e_l = p_l^T E_l
//   c_l = LayerNorm(c_{l-1} - e_l)
//
// Because e_l is an expectation rather than a sampled row, the contexts do
// not depend on which SID is later drawn, and the SID likelihood factorizes
// into a product of per-level probabilities.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hsrl/hpn/encoder.hpp"
#include "hsrl/numerics/optimizer.hpp"
#include "hsrl/numerics/rng.hpp"
#include "hsrl/numerics/tensor.hpp"
#include "hsrl/tokenizer/codebook.hpp"

namespace hsrl::hpn {

using tokenizer::ItemId;
using tokenizer::SemanticId;
using tokenizer::Token;

struct HistoryEntry {
  ItemId item = 0;
  bool clicked = false;

  bool operator==(const HistoryEntry&) const = default;
};

struct UserState {
  std::vector<double> profile;
  std::vector<HistoryEntry> history;

  bool operator==(const UserState&) const = default;
};

struct PolicyConfig {
  std::size_t d_model = 32;
  std::size_t history_window = 10;
  std::size_t profile_dim = 0;
  std::vector<std::size_t> vocab_sizes;
  // false replaces residual refinement with L independent heads on c_0.
  bool hierarchical = true;
};

struct PolicyOutput {
  std::vector<numerics::Tensor> probs;      // p_1..p_L
  std::vector<numerics::Tensor> log_probs;  // log p_1..log p_L
  std::vector<numerics::Tensor> expected;   // e_1..e_L (empty when flat)
  std::vector<numerics::Tensor> contexts;   // c_0..c_L

  std::size_t levels() const { return probs.size(); }
  std::span<const double> distribution(std::size_t level) const {
    return probs[level].data();
  }
  std::vector<std::vector<double>> snapshot() const;
};

// Test hook: a forced token replaces p_l by the one-hot vector on it.
struct ForwardOptions {
  std::vector<std::optional<Token>> forced_tokens;
  // Heads, token embeddings and norm parameters enter as constants, so a loss
  // on the resulting contexts reaches only c_0 and whatever produced it.
  bool detach_heads = false;
};

class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  PolicyNetwork(PolicyConfig config, std::vector<ItemId> catalog,
                std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  std::size_t levels() const { return config_.vocab_sizes.size(); }
  const std::vector<ItemId>& catalog() const { return catalog_; }
  std::size_t item_row(ItemId item) const;

  numerics::Tensor encode_state(const UserState& state) const;
  PolicyOutput forward(const numerics::Tensor& c0,
                       const ForwardOptions& options = {}) const;
  PolicyOutput act(const UserState& state) const {
    return forward(encode_state(state));
  }

  numerics::ParameterList parameters() const;
  // Parameters of the state encoder only.
  numerics::ParameterList encoder_parameters() const;

  const numerics::Tensor& head(std::size_t level) const { return heads_[level]; }
  const numerics::Tensor& token_embedding(std::size_t level) const {
    return token_embeddings_[level];
  }
  const SequenceEncoder& encoder() const { return encoder_; }

  // Seeds E_l from the tokenizer centroids and the encoder's item table from
  // each item's quantized embedding, both through one fixed random projection
  // to d_model with rows scaled to unit norm.
  void init_from_codebook(const tokenizer::Codebook& codebook,
                          const tokenizer::SidIndex& index, std::uint64_t seed);

 private:
  PolicyConfig config_;
  std::vector<ItemId> catalog_;
  SequenceEncoder encoder_;
  std::vector<numerics::Tensor> heads_;             // T_l x d_model
  std::vector<numerics::Tensor> token_embeddings_;  // T_l x d_model
  std::vector<numerics::Tensor> norm_gain_;
  std::vector<numerics::Tensor> norm_bias_;
};

// Sum over levels of log p_l[z_l].
numerics::Tensor sid_log_prob(const PolicyOutput& output, const SemanticId& sid);

SemanticId sample_sid(const PolicyOutput& output, Rng& rng);

struct ScoredItem {
  ItemId item = 0;
  double score = 0.0;
};

// score(i) = prod_l p_l[z_l(i)], sorted by descending score then ascending id.
std::vector<ScoredItem> score_candidates(const PolicyOutput& output,
                                         const tokenizer::SidIndex& index,
                                         std::span<const ItemId> candidates);

enum class SlateMode { kGreedy, kSample };

std::vector<ItemId> select_slate(const PolicyOutput& output,
                                 const tokenizer::SidIndex& index,
                                 std::span<const ItemId> candidates,
                                 std::size_t k, SlateMode mode, Rng& rng);

}  // namespace hsrl::hpn
