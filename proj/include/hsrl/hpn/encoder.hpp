#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsrl/numerics/optimizer.hpp"
#include "hsrl/numerics/rng.hpp"
#include "hsrl/numerics/tensor.hpp"

namespace hsrl::hpn {

struct EncoderConfig {
  std::size_t num_items = 0;
  std::size_t width = 32;
  std::size_t window = 10;
  std::size_t profile_dim = 0;
};

// Lightweight sequence encoder: item + feedback + position embeddings, one
// single-head self-attention layer with a residual connection, mean pooling
// and a linear projection. An empty history maps to a learned start vector.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(const EncoderConfig& config, Rng& rng);

  // `rows` index the item table; only the last `window` entries are used.
  numerics::Tensor encode(std::span<const std::size_t> rows,
                          std::span<const std::uint8_t> feedback,
                          std::span<const double> profile) const;

  void append_parameters(numerics::ParameterList& out,
                         const std::string& prefix) const;

  const EncoderConfig& config() const { return config_; }
  const numerics::Tensor& item_table() const { return item_table_; }
  const numerics::Tensor& start_vector() const { return start_; }

 private:
  EncoderConfig config_;
  numerics::Tensor item_table_;      // num_items x width
  numerics::Tensor feedback_table_;  // 2 x width
  numerics::Tensor position_table_;  // window x width
  numerics::Tensor query_;           // width x width
  numerics::Tensor key_;
  numerics::Tensor value_;
  numerics::Tensor project_;         // width x width
  numerics::Tensor project_bias_;    // width
  numerics::Tensor profile_project_; // width x profile_dim (empty if unused)
  numerics::Tensor start_;           // width
};

// Fixed Gaussian projection from feature space to `width` columns; outputs are
// scaled to unit norm.
class FeatureProjection {
 public:
  FeatureProjection(std::size_t dim, std::size_t width, Rng& rng);

  void apply(std::span<const double> x, std::span<double> out) const;

 private:
  std::size_t dim_;
  std::size_t width_;
  std::vector<double> matrix_;  // width x dim
};

// Gaussian init with the given standard deviation.
numerics::Tensor init_parameter(numerics::Shape shape, double stddev, Rng& rng);

}  // namespace hsrl::hpn
