#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regbn/matrix.hpp"

namespace regbn {

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Little-endian byte sink shared by every binary payload (layer snapshots, model
/// checkpoints, dataset splits): 4-byte magic, u16 version, then fields in declared order.
class BinaryWriter {
 public:
  BinaryWriter(std::string_view magic, std::uint16_t version) {
    if (magic.size() != 4) throw FormatError("BinaryWriter: magic must be 4 bytes");
    buf_.append(magic);
    u16(version);
  }

  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }

  /// Length-prefixed array.
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double x : m.values()) f64(x);
  }

  const std::string& bytes() const noexcept { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class BinaryReader {
 public:
  /// Checks the magic and returns with the version available via version().
  BinaryReader(std::string_view bytes, std::string_view magic) : data_(bytes) {
    if (data_.size() < 6 || data_.substr(0, 4) != magic)
      throw FormatError("BinaryReader: bad magic, expected \"" + std::string(magic) + "\"");
    pos_ = 4;
    version_ = u16();
  }

  std::uint16_t version() const noexcept { return version_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(get_le(8)); }

  std::vector<double> f64s() {
    const std::uint64_t n = u64();
    if (n > (data_.size() - pos_) / 8) throw FormatError("BinaryReader: truncated payload");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  Matrix matrix() {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (c != 0 && r > (data_.size() / 8) / c) throw FormatError("BinaryReader: matrix too large");
    require(r * c * 8);
    Matrix m(r, c);
    for (double& x : m.values()) x = f64();
    return m;
  }

  bool at_end() const noexcept { return pos_ == data_.size(); }
  void expect_end() const {
    if (!at_end()) throw FormatError("BinaryReader: trailing bytes");
  }

 private:
  void require(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw FormatError("BinaryReader: truncated payload");
  }
  std::uint64_t get_le(int width) {
    require(static_cast<std::uint64_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::uint16_t version_ = 0;
};

}  // namespace regbn
