#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "v2s/error.hpp"

// Little-endian binary encoding helpers for the .v2sc / .v2sm containers.
// The build targets little-endian hosts; raw doubles and integers are
// memcpy'd so round-trips are bit-exact.
static_assert(std::endian::native == std::endian::little,
              "file containers assume a little-endian host");

namespace v2s::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }

  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }

  void magic(const char (&m)[5]) { raw(m, 4); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return read<std::uint8_t>(); }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  double f64() { return read<double>(); }

  void raw(void* out, std::size_t n) {
    require(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }

  // Raises LoadError::truncated naming expected vs actual length.
  void require(std::size_t n) const {
    if (pos_ + n > size_)
      throw LoadError(LoadError::Kind::truncated,
                      "truncated payload: need " + std::to_string(pos_ + n) + " bytes, have " +
                          std::to_string(size_));
  }

 private:
  template <typename T>
  T read() {
    T v;
    raw(&v, sizeof v);
    return v;
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace v2s::detail
