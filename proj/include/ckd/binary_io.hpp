#pragma once

// Little-endian binary envelope shared by the teacher cache and model
// checkpoints:
//
//   magic      8 bytes
//   version    u32
//   length     u64   payload byte count
//   payload    `length` bytes
//   checksum   u32   CRC-32 of every preceding byte
//
// Doubles are stored as their IEEE-754 bit patterns, so round trips are
// bit-exact.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ckd {

class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> data);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Reads what ByteWriter wrote. Running past the end throws CacheCorrupt.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> need(std::size_t n);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void write_envelope(const std::filesystem::path& path, std::string_view magic,
                    std::uint32_t version, std::span<const std::uint8_t> payload);

/// Throws IoError when the file cannot be opened and CacheCorrupt on a bad
/// magic, version, length or checksum.
std::vector<std::uint8_t> read_envelope(const std::filesystem::path& path, std::string_view magic,
                                        std::uint32_t version);

std::uint32_t crc32(std::span<const std::uint8_t> data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_file(const std::filesystem::path& path);
/// First 8 bytes of SHA-256, big-endian.
std::uint64_t fingerprint64(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace ckd
