#pragma once

// Little-endian byte helpers shared by the binary file formats.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tpp/error.hpp"

namespace tpp {

template <std::unsigned_integral T>
void put_le(std::vector<unsigned char>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>(value >> (8 * i)));
  }
}

class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::span<const unsigned char> take(std::size_t n, const char* error) {
    if (remaining() < n) throw DataError(std::string(error) + ": " + name_);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  template <std::unsigned_integral T>
  T get() {
    auto b = take(sizeof(T), "truncated header");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= T(b[i]) << (8 * i);
    return value;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
  std::string name_;
};

/// Reads at most `limit` bytes (all when limit is 0).
std::vector<unsigned char> read_file(const std::filesystem::path& path,
                                     std::size_t limit = 0);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace tpp
