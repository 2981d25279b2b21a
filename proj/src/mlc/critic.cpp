#include "hsrl/mlc/critic.hpp"

#include <cmath>

#include "hsrl/hpn/encoder.hpp"
#include "hsrl/numerics/errors.hpp"
#include "hsrl/numerics/rng.hpp"

namespace hsrl::mlc {

using numerics::Tensor;

Critic::Critic(const CriticConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.hidden == 0) throw ContractError("critic hidden width must be >= 1");
  if (config_.d_model == 0) throw ContractError("critic d_model must be >= 1");
  Rng rng(seed);
  const std::size_t heads = config_.per_level_heads ? config_.levels + 1 : 1;
  const double s_in = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
  const double s_out = 1.0 / std::sqrt(static_cast<double>(config_.hidden));
  for (std::size_t h = 0; h < heads; ++h) {
    hidden_w_.push_back(hpn::init_parameter({config_.hidden, config_.d_model}, s_in, rng));
    hidden_b_.push_back(Tensor::zeros({config_.hidden}, true));
    out_w_.push_back(hpn::init_parameter({config_.hidden}, s_out, rng));
    out_b_.push_back(Tensor::zeros({}, true));
  }
  level_weights_ = Tensor::zeros({config_.levels + 1}, true);
}

Tensor Critic::head_value(std::size_t head, const Tensor& c) const {
  Tensor h = numerics::tanh(
      numerics::add(numerics::matvec(hidden_w_[head], c), hidden_b_[head]));
  return numerics::add(numerics::dot(out_w_[head], h), out_b_[head]);
}

Tensor Critic::per_level_values(std::span<const Tensor> trajectory) const {
  if (trajectory.size() != config_.levels + 1) {
    throw ContractError("critic expects " + std::to_string(config_.levels + 1) +
                        " contexts, got " + std::to_string(trajectory.size()));
  }
  std::vector<Tensor> values;
  values.reserve(trajectory.size());
  for (std::size_t l = 0; l < trajectory.size(); ++l) {
    values.push_back(head_value(config_.per_level_heads ? l : 0, trajectory[l]));
  }
  return numerics::stack(values);
}

Tensor Critic::aggregate(const Tensor& values) const {
  if (values.numel() != config_.levels + 1) {
    throw ContractError("aggregate expects " + std::to_string(config_.levels + 1) +
                        " values");
  }
  return numerics::dot(numerics::softmax(level_weights_), values);
}

Tensor Critic::value(std::span<const Tensor> trajectory) const {
  if (config_.single_level) {
    if (trajectory.empty()) throw ContractError("critic needs c_0");
    return head_value(0, trajectory[0]);
  }
  return aggregate(per_level_values(trajectory));
}

std::vector<double> Critic::weight_snapshot() const {
  numerics::NoGradGuard guard;
  return numerics::softmax(level_weights_).to_vector();
}

numerics::ParameterList Critic::parameters() const {
  numerics::ParameterList out;
  for (std::size_t h = 0; h < hidden_w_.size(); ++h) {
    const std::string p = "critic.head" + std::to_string(h) + ".";
    out.push_back({p + "hidden_w", hidden_w_[h]});
    out.push_back({p + "hidden_b", hidden_b_[h]});
    out.push_back({p + "out_w", out_w_[h]});
    out.push_back({p + "out_b", out_b_[h]});
  }
  out.push_back({"critic.level_weights", level_weights_});
  return out;
}

Critic Critic::clone() const {
  Critic copy;
  copy.config_ = config_;
  for (const auto& t : hidden_w_) copy.hidden_w_.push_back(t.clone());
  for (const auto& t : hidden_b_) copy.hidden_b_.push_back(t.clone());
  for (const auto& t : out_w_) copy.out_w_.push_back(t.clone());
  for (const auto& t : out_b_) copy.out_b_.push_back(t.clone());
  copy.level_weights_ = level_weights_.clone();
  return copy;
}

void sync_target(const Critic& live, Critic& target, TargetSyncMode mode,
                 double tau) {
  auto src = live.parameters();
  auto dst = target.parameters();
  if (src.size() != dst.size()) {
    throw ContractError("target critic structure differs from live critic");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name ||
        src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw ContractError("target critic tensor " + dst[i].name +
                          " does not match live tensor " + src[i].name);
    }
  }
  if (mode == TargetSyncMode::kSoft && !(tau >= 0.0 && tau <= 1.0)) {
    throw ContractError("soft target rate must lie in [0, 1]");
  }
  const bool copy = mode == TargetSyncMode::kHard || tau == 1.0;
  if (mode == TargetSyncMode::kSoft && tau == 0.0) return;
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].tensor.data();
    auto d = dst[i].tensor.mutable_data();
    for (std::size_t j = 0; j < s.size(); ++j) {
      d[j] = copy ? s[j] : tau * s[j] + (1.0 - tau) * d[j];
    }
  }
}

TargetCritic::TargetCritic(const Critic& live, TargetSyncOptions options)
    : target_(live.clone()), options_(options) {
  if (options_.mode == TargetSyncMode::kHard && options_.period == 0) {
    throw ContractError("hard target sync period must be positive");
  }
}

void TargetCritic::on_step(const Critic& live) {
  ++staleness_;
  if (options_.mode == TargetSyncMode::kSoft) {
    sync_target(live, target_, TargetSyncMode::kSoft, options_.tau);
    staleness_ = 0;
  } else if (staleness_ >= options_.period) {
    sync_target(live, target_, TargetSyncMode::kHard, 1.0);
    staleness_ = 0;
  }
}

}  // namespace hsrl::mlc
