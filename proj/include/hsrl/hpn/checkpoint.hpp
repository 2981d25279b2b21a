#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hsrl/numerics/optimizer.hpp"

namespace hsrl::hpn {

// Named float64 tensor blocks behind the "HSRLPN1\0" magic:
//   u32 version, u32 block count, then per block
//   u32 name length, name bytes, u32 rank, u64 dim x rank, f64 data.
struct TensorBlock {
  std::string name;
  numerics::Shape shape;
  std::vector<double> data;

  bool operator==(const TensorBlock&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const std::vector<TensorBlock>& blocks);
std::vector<TensorBlock> decode_checkpoint(std::string bytes);

std::vector<TensorBlock> snapshot_blocks(const numerics::ParameterList& params);

void save_checkpoint(const std::filesystem::path& path,
                     const numerics::ParameterList& params);
std::vector<TensorBlock> load_checkpoint(const std::filesystem::path& path);

// Copies block values into parameters with the same names. Every parameter
// must be present with an identical shape; otherwise nothing is modified.
void restore_parameters(numerics::ParameterList& params,
                        const std::vector<TensorBlock>& blocks);

}  // namespace hsrl::hpn
