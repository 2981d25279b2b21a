#include "hsrl/trainer/losses.hpp"

#include <algorithm>

#include "hsrl/numerics/errors.hpp"

namespace hsrl::trainer {

using numerics::Tensor;

double td_target(double reward, bool done, double next_value, double gamma) {
  if (done) return reward;
  return reward + gamma * next_value;
}

double clip_advantage(double q, double value, double bound) {
  if (!(bound > 0.0)) throw ContractError("advantage clip bound must be positive");
  return std::clamp(q - value, -bound, bound);
}

Tensor critic_loss(std::span<const Tensor> values, std::span<const double> targets) {
  if (values.empty()) throw ContractError("critic loss over an empty batch");
  if (values.size() != targets.size()) {
    throw ContractError("critic loss: values and targets differ in length");
  }
  std::vector<Tensor> errors;
  errors.reserve(values.size());
  for (std::size_t b = 0; b < values.size(); ++b) {
    Tensor diff = numerics::add_scalar(values[b], -targets[b]);
    errors.push_back(numerics::mul(diff, diff));
  }
  return numerics::mean(numerics::stack(errors));
}

Tensor slate_log_prob(const PolicyOutput& output, std::span<const SemanticId> sids) {
  if (sids.empty()) throw ContractError("slate log-probability of an empty slate");
  std::vector<Tensor> terms;
  terms.reserve(sids.size());
  for (const auto& sid : sids) terms.push_back(hpn::sid_log_prob(output, sid));
  return numerics::mean(numerics::stack(terms));
}

Tensor pg_loss(std::span<const Tensor> slate_log_probs,
               std::span<const double> advantages) {
  if (slate_log_probs.empty()) throw ContractError("policy loss over an empty batch");
  if (slate_log_probs.size() != advantages.size()) {
    throw ContractError("policy loss: log-probs and advantages differ in length");
  }
  std::vector<Tensor> terms;
  terms.reserve(advantages.size());
  for (std::size_t b = 0; b < advantages.size(); ++b) {
    terms.push_back(numerics::scale(slate_log_probs[b], -advantages[b]));
  }
  return numerics::mean(numerics::stack(terms));
}

Tensor entropy_term(const PolicyOutput& output) {
  if (output.levels() == 0) throw ContractError("entropy of an empty policy output");
  std::vector<Tensor> levels;
  levels.reserve(output.levels());
  for (std::size_t l = 0; l < output.levels(); ++l) {
    // Entries with p = 0 contribute 0 * log p = 0 as long as log p is finite,
    // which log_softmax guarantees.
    levels.push_back(numerics::dot(output.probs[l], output.log_probs[l]));
  }
  return numerics::sum(numerics::stack(levels));
}

Tensor bc_loss(const PolicyOutput& output, std::span<const SemanticId> sids,
               std::span<const std::uint8_t> feedback) {
  if (sids.size() != feedback.size()) {
    throw ContractError("behavior cloning: slate and feedback differ in length");
  }
  std::vector<Tensor> terms;
  for (std::size_t j = 0; j < sids.size(); ++j) {
    if (feedback[j]) terms.push_back(hpn::sid_log_prob(output, sids[j]));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return numerics::scale(numerics::mean(numerics::stack(terms)), -1.0);
}

}  // namespace hsrl::trainer
