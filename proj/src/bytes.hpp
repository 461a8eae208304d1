#pragma once

// Byte-level helpers for the binary formats (STFL fields, STCK checkpoints,
// IDX datasets). Little-endian unless stated otherwise.

#include "steerkit/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace steerkit::detail {

class ByteWriter {
 public:
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    const U u = std::bit_cast<U>(v);
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xFF));
  }
  template <typename T>
  void be(T v) {
    static_assert(std::is_integral_v<T>);
    for (size_t i = sizeof(T); i-- > 0;) buf_.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> data) : data_(data) {}

  void need(size_t n, const std::string& field) const {
    if (pos_ + n > data_.size())
      throw FormatError(FormatError::Kind::Truncated, field,
                        "truncated " + field + ": expected " + std::to_string(pos_ + n) + " bytes, got " +
                            std::to_string(data_.size()));
  }
  template <typename T>
  T le(const std::string& field) {
    need(sizeof(T), field);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    U u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }
  template <typename T>
  T be(const std::string& field) {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T), field);
    std::uint64_t u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) u = (u << 8) | data_[pos_ + i];
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string fixed(size_t n, const std::string& field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str(const std::string& field) {
    const auto n = le<std::uint32_t>(field);
    return fixed(n, field);
  }
  std::span<const unsigned char> take(size_t n, const std::string& field) {
    need(n, field);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  size_t position() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  size_t size() const { return data_.size(); }

 private:
  std::span<const unsigned char> data_;
  size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "path", "cannot open " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "path", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "path", "write failed for " + path.string());
}

}  // namespace steerkit::detail
