#include "hsrl/numerics/optimizer.hpp"

#include <cmath>

#include "hsrl/numerics/errors.hpp"

namespace hsrl::numerics {

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) {
    throw ContractError("optimizer learning rate must be positive");
  }
  for (const Tensor& p : params_) {
    if (!p.requires_grad() || !p.is_leaf()) {
      throw ContractError("optimizer parameters must be trainable leaves");
    }
    first_.emplace_back(p.numel(), 0.0);
    second_.emplace_back(p.numel(), 0.0);
  }
  param_steps_.assign(params_.size(), 0);
}

void Optimizer::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ContractError("optimizer learning rate must be positive");
  options_.learning_rate = lr;
}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (const Tensor& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient; optimizer step aborted");
      }
    }
  }
  ++steps_;
  const double lr = options_.learning_rate;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    auto grad = p.grad();
    bool nonzero = false;
    for (double g : grad) nonzero = nonzero || g != 0.0;
    if (!nonzero) continue;
    auto value = p.mutable_data();
    if (options_.mode == OptimizerMode::kSgd) {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
      continue;
    }
    const std::uint64_t t = ++param_steps_[k];
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto& m = first_[k];
    auto& v = second_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace hsrl::numerics
