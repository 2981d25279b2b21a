#include "hsrl/hpn/checkpoint.hpp"

#include <cmath>
#include <map>

#include "hsrl/numerics/binary_io.hpp"
#include "hsrl/numerics/errors.hpp"

namespace hsrl::hpn {

namespace {
constexpr std::string_view kMagic("HSRLPN1\0", 8);
}

std::string encode_checkpoint(const std::vector<TensorBlock>& blocks) {
  BinaryWriter w;
  w.bytes(kMagic);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    if (numerics::shape_numel(b.shape) != b.data.size()) {
      throw ContractError("checkpoint block " + b.name + " has inconsistent shape");
    }
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
    for (std::size_t d : b.shape) w.uint<std::uint64_t>(d);
    for (double v : b.data) w.f64(v);
  }
  return w.buffer();
}

std::vector<TensorBlock> decode_checkpoint(std::string bytes) {
  BinaryReader r(std::move(bytes));
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size(), "magic") != kMagic) {
    throw FormatError("not a parameter checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.uint<std::uint32_t>("block count");
  std::vector<TensorBlock> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string what = "block " + std::to_string(i + 1) + " of " +
                             std::to_string(count);
    TensorBlock b;
    const auto name_len = r.uint<std::uint32_t>(what + " name length");
    b.name = std::string(r.bytes(name_len, what + " name"));
    const auto rank = r.uint<std::uint32_t>(what + " rank");
    if (rank > 8) throw FormatError(what + " has implausible rank");
    for (std::uint32_t k = 0; k < rank; ++k) {
      b.shape.push_back(r.uint<std::uint64_t>(what + " shape"));
    }
    const std::size_t n = numerics::shape_numel(b.shape);
    if (n > r.remaining() / sizeof(double)) {
      throw FormatError("truncated file: missing " + what + " data");
    }
    b.data.resize(n);
    for (double& v : b.data) {
      v = r.f64(what + " data");
      if (!std::isfinite(v)) throw FormatError(what + " holds a non-finite value");
    }
    blocks.push_back(std::move(b));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint blocks");
  return blocks;
}

std::vector<TensorBlock> snapshot_blocks(const numerics::ParameterList& params) {
  std::vector<TensorBlock> blocks;
  for (const auto& p : params) {
    blocks.push_back({p.name, p.tensor.shape(), p.tensor.to_vector()});
  }
  return blocks;
}

void save_checkpoint(const std::filesystem::path& path,
                     const numerics::ParameterList& params) {
  write_file(path, encode_checkpoint(snapshot_blocks(params)));
}

std::vector<TensorBlock> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void restore_parameters(numerics::ParameterList& params,
                        const std::vector<TensorBlock>& blocks) {
  std::map<std::string, const TensorBlock*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw ContractError("checkpoint has no tensor named " + p.name);
    }
    if (it->second->shape != p.tensor.shape()) {
      throw ContractError("checkpoint tensor " + p.name + " has shape " +
                          numerics::shape_string(it->second->shape) +
                          ", model expects " +
                          numerics::shape_string(p.tensor.shape()));
    }
  }
  for (auto& p : params) {
    const auto& src = by_name.at(p.name)->data;
    auto dst = p.tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace hsrl::hpn
