#pragma once

// Multi-Level Critic: a value head f(c_l) evaluated on every context of the
// policy trajectory, fused into one state value by softmax-normalized
// learnable level weights.

#include <cstdint>
#include <span>
#include <vector>

#include "hsrl/numerics/optimizer.hpp"
#include "hsrl/numerics/tensor.hpp"

namespace hsrl::mlc {

struct CriticConfig {
  std::size_t d_model = 32;
  std::size_t hidden = 64;
  std::size_t levels = 3;  // L; the critic sees L+1 contexts
  bool per_level_heads = false;
  // Ablation: value comes from f(c_0) alone and the level weights are unused.
  bool single_level = false;
};

class Critic {
 public:
  Critic() = default;
  Critic(const CriticConfig& config, std::uint64_t seed);

  const CriticConfig& config() const { return config_; }

  // V[l] = f(c_l), l = 0..L.
  numerics::Tensor per_level_values(
      std::span<const numerics::Tensor> trajectory) const;
  // sum_l softmax(w)_l V[l]
  numerics::Tensor aggregate(const numerics::Tensor& values) const;
  // Full state value used for TD learning.
  numerics::Tensor value(std::span<const numerics::Tensor> trajectory) const;

  std::vector<double> weight_snapshot() const;

  numerics::ParameterList parameters() const;
  // Independent copy with identical values.
  Critic clone() const;

 private:
  numerics::Tensor head_value(std::size_t head, const numerics::Tensor& c) const;

  CriticConfig config_;
  std::vector<numerics::Tensor> hidden_w_;  // hidden x d_model
  std::vector<numerics::Tensor> hidden_b_;
  std::vector<numerics::Tensor> out_w_;     // hidden
  std::vector<numerics::Tensor> out_b_;     // scalar
  numerics::Tensor level_weights_;          // L+1 raw weights
};

enum class TargetSyncMode { kSoft, kHard };

struct TargetSyncOptions {
  TargetSyncMode mode = TargetSyncMode::kSoft;
  double tau = 0.005;
  std::size_t period = 100;
};

// Parameter-wise sync. Soft: target <- tau*live + (1-tau)*target.
// Hard: target <- live.
void sync_target(const Critic& live, Critic& target, TargetSyncMode mode,
                 double tau);

// Frozen critic copy refreshed on a schedule; values are constant between
// sync events.
class TargetCritic {
 public:
  TargetCritic() = default;
  TargetCritic(const Critic& live, TargetSyncOptions options);

  // Call once per optimizer step of the live critic.
  void on_step(const Critic& live);

  const Critic& network() const { return target_; }
  std::size_t staleness() const { return staleness_; }
  const TargetSyncOptions& options() const { return options_; }

 private:
  Critic target_;
  TargetSyncOptions options_;
  std::size_t staleness_ = 0;
};

}  // namespace hsrl::mlc
