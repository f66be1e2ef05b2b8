#pragma once

// Little-endian encoding helpers shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fcl/error.hpp"

namespace fcl::detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  [[nodiscard]] const std::vector<unsigned char>& buffer() const noexcept { return buf_; }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& buf, std::string context) : buf_(buf), context_(std::move(context)) {}

  void expect_magic(const char (&magic)[5]) {
    need(4, "magic");
    if (std::memcmp(buf_.data() + pos_, magic, 4) != 0) throw IoError(context_ + ": bad magic, expected " + magic);
    pos_ += 4;
  }
  std::uint16_t u16(const char* what) { return le<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return le<std::uint32_t>(what); }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  [[nodiscard]] std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw IoError(context_ + ": truncated while reading " + what);
  }
  void expect_end() const {
    if (remaining() != 0) throw IoError(context_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }

 private:
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  const std::vector<unsigned char>& buf_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace fcl::detail
