#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsrl/numerics/tensor.hpp"

namespace hsrl::numerics {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

enum class OptimizerMode { kAdam, kSgd };

struct OptimizerOptions {
  OptimizerMode mode = OptimizerMode::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-order optimizer over a fixed parameter set. Parameters whose gradient
// is identically zero are left untouched (moments included), so a step with
// zero gradients never moves anything.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerOptions options = {});

  // Throws TrainingError without modifying any parameter if a gradient is
  // not finite.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const OptimizerOptions& options() const { return options_; }
  void set_learning_rate(double lr);

 private:
  std::vector<Tensor> params_;
  OptimizerOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::vector<std::uint64_t> param_steps_;
  std::uint64_t steps_ = 0;
};

std::vector<Tensor> tensors_of(const ParameterList& params);

}  // namespace hsrl::numerics
