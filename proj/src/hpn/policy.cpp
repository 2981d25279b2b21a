#include "hsrl/hpn/policy.hpp"

#include <algorithm>
#include <cmath>

#include "hsrl/numerics/errors.hpp"

namespace hsrl::hpn {

using numerics::Tensor;

std::vector<std::vector<double>> PolicyOutput::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& p : probs) out.push_back(p.to_vector());
  return out;
}

PolicyNetwork::PolicyNetwork(PolicyConfig config, std::vector<ItemId> catalog,
                             std::uint64_t seed)
    : config_(std::move(config)), catalog_(std::move(catalog)) {
  if (config_.vocab_sizes.empty()) {
    throw ContractError("policy needs at least one level");
  }
  if (config_.d_model < 2) throw ContractError("policy d_model must be >= 2");
  if (!std::is_sorted(catalog_.begin(), catalog_.end()) ||
      std::adjacent_find(catalog_.begin(), catalog_.end()) != catalog_.end()) {
    throw ContractError("policy catalog must be strictly ascending");
  }
  Rng rng(seed);
  EncoderConfig enc;
  enc.num_items = catalog_.size();
  enc.width = config_.d_model;
  enc.window = config_.history_window;
  enc.profile_dim = config_.profile_dim;
  encoder_ = SequenceEncoder(enc, rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
  for (std::size_t t : config_.vocab_sizes) {
    if (t == 0) throw ContractError("vocabulary size must be positive");
    heads_.push_back(init_parameter({t, config_.d_model}, s, rng));
    token_embeddings_.push_back(init_parameter({t, config_.d_model}, 1.0, rng));
    norm_gain_.push_back(Tensor::parameter(
        {config_.d_model}, std::vector<double>(config_.d_model, 1.0)));
    norm_bias_.push_back(Tensor::zeros({config_.d_model}, true));
  }
}

std::size_t PolicyNetwork::item_row(ItemId item) const {
  auto it = std::lower_bound(catalog_.begin(), catalog_.end(), item);
  if (it == catalog_.end() || *it != item) {
    throw LookupError("unknown item id " + std::to_string(item));
  }
  return static_cast<std::size_t>(it - catalog_.begin());
}

Tensor PolicyNetwork::encode_state(const UserState& state) const {
  std::vector<std::size_t> rows;
  std::vector<std::uint8_t> bits;
  rows.reserve(state.history.size());
  for (const auto& h : state.history) {
    rows.push_back(item_row(h.item));
    bits.push_back(h.clicked ? 1 : 0);
  }
  return encoder_.encode(rows, bits, state.profile);
}

PolicyOutput PolicyNetwork::forward(const Tensor& c0,
                                    const ForwardOptions& options) const {
  if (c0.rank() != 1 || c0.numel() != config_.d_model) {
    throw DimensionError("policy forward: context has shape " +
                         numerics::shape_string(c0.shape()) + ", expected [" +
                         std::to_string(config_.d_model) + "]");
  }
  PolicyOutput out;
  out.contexts.push_back(c0);
  auto use = [&](const Tensor& t) {
    return options.detach_heads ? t.detach() : t;
  };
  for (std::size_t level = 0; level < levels(); ++level) {
    const Tensor& input = config_.hierarchical ? out.contexts.back() : c0;
    const std::size_t t = config_.vocab_sizes[level];
    Tensor logits = numerics::matvec(use(heads_[level]), input);
    Tensor p, logp;
    const bool forced = level < options.forced_tokens.size() &&
                        options.forced_tokens[level].has_value();
    if (forced) {
      const Token z = *options.forced_tokens[level];
      if (z >= t) throw ContractError("forced token outside vocabulary");
      std::vector<double> onehot(t, 0.0);
      onehot[z] = 1.0;
      p = Tensor::vector(onehot);
      std::vector<double> lo(t, -1e300);
      lo[z] = 0.0;
      logp = Tensor::vector(std::move(lo));
    } else {
      p = numerics::softmax(logits);
      logp = numerics::log_softmax(logits);
    }
    out.probs.push_back(p);
    out.log_probs.push_back(logp);
    if (config_.hierarchical) {
      Tensor e = numerics::vecmat(p, use(token_embeddings_[level]));
      out.expected.push_back(e);
      out.contexts.push_back(numerics::layer_norm(
          numerics::sub(out.contexts.back(), e), use(norm_gain_[level]),
          use(norm_bias_[level])));
    } else {
      out.contexts.push_back(c0);
    }
  }
  return out;
}

numerics::ParameterList PolicyNetwork::encoder_parameters() const {
  numerics::ParameterList out;
  encoder_.append_parameters(out, "policy.encoder.");
  return out;
}

numerics::ParameterList PolicyNetwork::parameters() const {
  numerics::ParameterList out = encoder_parameters();
  for (std::size_t l = 0; l < levels(); ++l) {
    const std::string p = "policy.level" + std::to_string(l + 1) + ".";
    out.push_back({p + "head", heads_[l]});
    out.push_back({p + "token_embedding", token_embeddings_[l]});
    out.push_back({p + "norm_gain", norm_gain_[l]});
    out.push_back({p + "norm_bias", norm_bias_[l]});
  }
  return out;
}

void PolicyNetwork::init_from_codebook(const tokenizer::Codebook& codebook,
                                       const tokenizer::SidIndex& index,
                                       std::uint64_t seed) {
  if (codebook.vocab_sizes() != config_.vocab_sizes) {
    throw ContractError("codebook vocabulary does not match policy");
  }
  Rng rng(seed);
  const std::size_t d = codebook.dim(), m = config_.d_model;
  const FeatureProjection proj(d, m, rng);
  for (std::size_t l = 0; l < levels(); ++l) {
    const auto& c = codebook.centroids(l);
    auto dst = token_embeddings_[l].mutable_data();
    for (std::size_t t = 0; t < c.rows; ++t) {
      proj.apply(c.row(t), dst.subspan(t * m, m));
    }
  }
  // History items start from their quantized embeddings.
  Tensor table = encoder_.item_table();
  auto dst = table.mutable_data();
  std::vector<double> recon(d);
  for (std::size_t r = 0; r < catalog_.size(); ++r) {
    if (!index.contains(catalog_[r])) continue;
    const auto& sid = index.encode(catalog_[r]);
    std::fill(recon.begin(), recon.end(), 0.0);
    for (std::size_t l = 0; l < sid.size(); ++l) {
      auto c = codebook.centroids(l).row(sid[l]);
      for (std::size_t j = 0; j < d; ++j) recon[j] += c[j];
    }
    proj.apply(recon, dst.subspan(r * m, m));
  }
}

Tensor sid_log_prob(const PolicyOutput& output, const SemanticId& sid) {
  if (sid.size() != output.levels()) {
    throw ContractError("SID has " + std::to_string(sid.size()) +
                        " tokens, policy has " + std::to_string(output.levels()) +
                        " levels");
  }
  std::vector<Tensor> terms;
  terms.reserve(sid.size());
  for (std::size_t l = 0; l < sid.size(); ++l) {
    if (sid[l] >= output.log_probs[l].numel()) {
      throw ContractError("token " + std::to_string(sid[l]) +
                          " outside level " + std::to_string(l + 1) +
                          " vocabulary");
    }
    terms.push_back(numerics::at(output.log_probs[l], sid[l]));
  }
  return numerics::sum(numerics::stack(terms));
}

namespace {

std::size_t draw(std::span<const double> weights, double total, Rng& rng) {
  const double target = rng.uniform() * total;
  double running = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    running += weights[i];
    last = i;
    if (running > target) return i;
  }
  return last;
}

}  // namespace

SemanticId sample_sid(const PolicyOutput& output, Rng& rng) {
  SemanticId sid;
  for (std::size_t l = 0; l < output.levels(); ++l) {
    auto p = output.distribution(l);
    double total = 0.0;
    for (double v : p) total += v;
    sid.tokens.push_back(static_cast<Token>(draw(p, total, rng)));
  }
  return sid;
}

std::vector<ScoredItem> score_candidates(const PolicyOutput& output,
                                         const tokenizer::SidIndex& index,
                                         std::span<const ItemId> candidates) {
  std::vector<ScoredItem> scored;
  scored.reserve(candidates.size());
  for (ItemId item : candidates) {
    const SemanticId& sid = index.encode(item);
    if (sid.size() != output.levels()) {
      throw ContractError("candidate SID length does not match policy levels");
    }
    double score = 1.0;
    for (std::size_t l = 0; l < sid.size(); ++l) {
      auto p = output.distribution(l);
      if (sid[l] >= p.size()) throw ContractError("candidate token outside vocabulary");
      score *= p[sid[l]];
    }
    scored.push_back({item, score});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredItem& a, const ScoredItem& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.item < b.item;
                   });
  return scored;
}

std::vector<ItemId> select_slate(const PolicyOutput& output,
                                 const tokenizer::SidIndex& index,
                                 std::span<const ItemId> candidates,
                                 std::size_t k, SlateMode mode, Rng& rng) {
  if (k == 0) throw ContractError("slate size must be positive");
  if (k > candidates.size()) {
    throw ContractError("slate size " + std::to_string(k) + " exceeds " +
                        std::to_string(candidates.size()) + " candidates");
  }
  std::vector<ScoredItem> scored = score_candidates(output, index, candidates);
  std::vector<ItemId> slate;
  slate.reserve(k);
  if (mode == SlateMode::kGreedy) {
    for (std::size_t i = 0; i < k; ++i) slate.push_back(scored[i].item);
    return slate;
  }
  std::vector<double> weights;
  weights.reserve(scored.size());
  for (const auto& s : scored) weights.push_back(s.score);
  for (std::size_t pick = 0; pick < k; ++pick) {
    double total = 0.0;
    for (double w : weights) total += std::max(w, 0.0);
    std::size_t chosen;
    if (total > 0.0) {
      chosen = draw(weights, total, rng);
    } else {
      // every remaining score underflowed; fall back to uniform
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] >= 0.0) open.push_back(i);
      }
      chosen = open[rng.uniform_int(open.size())];
    }
    slate.push_back(scored[chosen].item);
    weights[chosen] = -1.0;
  }
  return slate;
}

}  // namespace hsrl::hpn
