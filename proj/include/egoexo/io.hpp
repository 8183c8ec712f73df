#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egoexo/errors.hpp"

// Little-endian binary helpers shared by the feature store, the retrieval
// index and checkpoints.
namespace egoexo::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <typename T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }
  void u16_string(std::string_view s) {
    if (s.size() > 0xFFFF) throw ValidationError("identifier longer than 65535 bytes");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void u32_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  void bytes(void* out, std::size_t n, const char* what) {
    if (remaining() < n) throw CorruptionError(std::string("truncated ") + what, pos_);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T get(const char* what) {
    T value;
    bytes(&value, sizeof(T), what);
    return value;
  }
  std::string u16_string(const char* what) {
    auto n = get<std::uint16_t>(what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  std::string u32_string(const char* what) {
    auto n = get<std::uint32_t>(what);
    if (remaining() < n) throw CorruptionError(std::string("truncated ") + what, pos_);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

}  // namespace egoexo::io
