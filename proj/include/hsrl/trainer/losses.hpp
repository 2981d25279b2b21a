#pragma once

// Loss terms of the joint actor-critic objective. Scalar helpers return plain
// doubles; everything that needs a gradient returns a tensor.

#include <cstdint>
#include <span>

#include "hsrl/hpn/policy.hpp"
#include "hsrl/numerics/tensor.hpp"

namespace hsrl::trainer {

using hpn::PolicyOutput;
using tokenizer::SemanticId;

// Q = r + gamma (1 - d) V'(s')
double td_target(double reward, bool done, double next_value, double gamma);

// clip(Q - V, -bound, bound)
double clip_advantage(double q, double value, double bound = 1.0);

// mean_b (V_b - Q_b)^2 with Q constant.
numerics::Tensor critic_loss(std::span<const numerics::Tensor> values,
                             std::span<const double> targets);

// Mean over the slate of the SID log-probabilities.
numerics::Tensor slate_log_prob(const PolicyOutput& output,
                                std::span<const SemanticId> sids);

// mean_b -A_b * log pi_b with A constant.
numerics::Tensor pg_loss(std::span<const numerics::Tensor> slate_log_probs,
                         std::span<const double> advantages);

// sum_l sum_z p log p (non-positive; adding it to a minimized loss raises
// entropy).
numerics::Tensor entropy_term(const PolicyOutput& output);

// -(1 / sum y) sum_j y_j log pi(z_j); exactly zero without positives.
numerics::Tensor bc_loss(const PolicyOutput& output,
                         std::span<const SemanticId> sids,
                         std::span<const std::uint8_t> feedback);

}  // namespace hsrl::trainer
