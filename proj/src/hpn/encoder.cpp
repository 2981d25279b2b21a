#include "hsrl/hpn/encoder.hpp"

#include <cmath>

#include "hsrl/numerics/errors.hpp"

namespace hsrl::hpn {

using numerics::Tensor;

Tensor init_parameter(numerics::Shape shape, double stddev, Rng& rng) {
  std::vector<double> data(numerics::shape_numel(shape));
  for (double& v : data) v = rng.normal(0.0, stddev);
  return Tensor::parameter(std::move(shape), std::move(data));
}

SequenceEncoder::SequenceEncoder(const EncoderConfig& config, Rng& rng)
    : config_(config) {
  if (config_.num_items == 0 || config_.width == 0 || config_.window == 0) {
    throw ContractError("encoder needs items, width and window > 0");
  }
  const std::size_t w = config_.width;
  const double s = 1.0 / std::sqrt(static_cast<double>(w));
  item_table_ = init_parameter({config_.num_items, w}, s, rng);
  feedback_table_ = init_parameter({2, w}, s, rng);
  position_table_ = init_parameter({config_.window, w}, 0.1 * s, rng);
  query_ = init_parameter({w, w}, s, rng);
  key_ = init_parameter({w, w}, s, rng);
  value_ = init_parameter({w, w}, s, rng);
  project_ = init_parameter({w, w}, s, rng);
  project_bias_ = Tensor::zeros({w}, true);
  if (config_.profile_dim > 0) {
    profile_project_ = init_parameter(
        {w, config_.profile_dim},
        1.0 / std::sqrt(static_cast<double>(config_.profile_dim)), rng);
  }
  start_ = init_parameter({w}, s, rng);
}

Tensor SequenceEncoder::encode(std::span<const std::size_t> rows,
                               std::span<const std::uint8_t> feedback,
                               std::span<const double> profile) const {
  if (rows.size() != feedback.size()) {
    throw ContractError("encoder: history items and feedback differ in length");
  }
  if (profile.size() != config_.profile_dim) {
    throw DimensionError("encoder: profile has " + std::to_string(profile.size()) +
                         " features, expected " +
                         std::to_string(config_.profile_dim));
  }
  Tensor profile_term;
  if (config_.profile_dim > 0) {
    profile_term = numerics::matvec(
        profile_project_,
        Tensor::vector(std::vector<double>(profile.begin(), profile.end())));
  }
  if (rows.empty()) {
    return profile_term.defined() ? numerics::add(start_, profile_term) : start_;
  }
  const std::size_t offset =
      rows.size() > config_.window ? rows.size() - config_.window : 0;
  const std::size_t n = rows.size() - offset;
  std::vector<std::size_t> item_rows(rows.begin() + offset, rows.end());
  std::vector<std::size_t> bits;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < n; ++i) {
    bits.push_back(feedback[offset + i] ? 1 : 0);
    positions.push_back(i);
  }
  Tensor x = numerics::gather_rows(item_table_, item_rows);
  x = numerics::add(x, numerics::gather_rows(feedback_table_, bits));
  x = numerics::add(x, numerics::gather_rows(position_table_, positions));

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(config_.width));
  Tensor q = numerics::matmul(x, query_, true);
  Tensor k = numerics::matmul(x, key_, true);
  Tensor v = numerics::matmul(x, value_, true);
  Tensor attn = numerics::softmax_rows(numerics::scale(numerics::matmul(q, k, true), inv_sqrt));
  Tensor mixed = numerics::add(x, numerics::matmul(attn, v));
  Tensor pooled = numerics::mean_rows(mixed);
  Tensor out = numerics::add(numerics::matvec(project_, pooled), project_bias_);
  if (profile_term.defined()) out = numerics::add(out, profile_term);
  return out;
}

void SequenceEncoder::append_parameters(numerics::ParameterList& out,
                                        const std::string& prefix) const {
  out.push_back({prefix + "item_table", item_table_});
  out.push_back({prefix + "feedback_table", feedback_table_});
  out.push_back({prefix + "position_table", position_table_});
  out.push_back({prefix + "attn_query", query_});
  out.push_back({prefix + "attn_key", key_});
  out.push_back({prefix + "attn_value", value_});
  out.push_back({prefix + "project", project_});
  out.push_back({prefix + "project_bias", project_bias_});
  if (profile_project_.defined()) {
    out.push_back({prefix + "profile_project", profile_project_});
  }
  out.push_back({prefix + "start", start_});
}

FeatureProjection::FeatureProjection(std::size_t dim, std::size_t width, Rng& rng)
    : dim_(dim), width_(width), matrix_(dim * width) {
  if (dim == 0 || width == 0) throw ContractError("projection needs positive sizes");
  for (double& v : matrix_) v = rng.normal();
}

void FeatureProjection::apply(std::span<const double> x, std::span<double> out) const {
  if (x.size() != dim_ || out.size() != width_) {
    throw DimensionError("feature projection: size mismatch");
  }
  double norm = 0.0;
  for (std::size_t i = 0; i < width_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) acc += matrix_[i * dim_ + j] * x[j];
    out[i] = acc;
    norm += acc * acc;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : out) v /= norm;
  }
}

}  // namespace hsrl::hpn
