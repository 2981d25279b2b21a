#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "hsrl/numerics/errors.hpp"

namespace hsrl {

// Little-endian encoder into an in-memory buffer; files are written in one
// shot so a failed save never leaves a half-written file behind a valid name.
class BinaryWriter {
 public:
  void bytes(std::string_view raw) { buffer_.append(raw); }

  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buffer_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
  }

  void f64(double value) {
    std::uint64_t bits;
    std::memcpy(&bits, &value, sizeof bits);
    uint<std::uint64_t>(bits);
  }

  const std::string& buffer() const { return buffer_; }

 private:
  std::string buffer_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : data_(std::move(data)) {}

  std::string_view bytes(std::size_t n, const std::string& what) {
    require(n, what);
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  template <typename U>
  U uint(const std::string& what) {
    require(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i]))
               << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  double f64(const std::string& what) {
    const auto bits = uint<std::uint64_t>(what);
    double value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  void require(std::size_t n, const std::string& what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("truncated file: missing " + what);
    }
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hsrl
