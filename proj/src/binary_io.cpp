#include "ckd/binary_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <boost/crc.hpp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ckd/errors.hpp"

namespace ckd {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::span<const std::uint8_t> data) {
  buf_.insert(buf_.end(), data.begin(), data.end());
}

std::span<const std::uint8_t> ByteReader::need(std::size_t n) {
  if (remaining() < n) throw CacheCorrupt("truncated record");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t ByteReader::u32() {
  auto b = need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  boost::crc_32_type crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

namespace {

std::vector<std::uint8_t> sha256(std::span<const std::uint8_t> data) {
  std::vector<std::uint8_t> digest(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  digest.resize(len);
  return digest;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> data) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (const std::uint8_t b : sha256(data)) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::uint64_t fingerprint64(std::span<const std::uint8_t> data) {
  const auto digest = sha256(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
  return v;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_envelope(const std::filesystem::path& path, std::string_view magic,
                    std::uint32_t version, std::span<const std::uint8_t> payload) {
  if (magic.size() != 8) throw InvalidInput("envelope magic must be 8 bytes");
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(magic.data()), magic.size()});
  w.u32(version);
  w.u64(payload.size());
  w.bytes(payload);
  w.u32(crc32(w.buffer()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint8_t> read_envelope(const std::filesystem::path& path, std::string_view magic,
                                        std::uint32_t version) {
  const std::vector<std::uint8_t> file = read_file(path);
  constexpr std::size_t header = 8 + 4 + 8;
  if (file.size() < header + 4) throw CacheCorrupt(path.string() + ": truncated");
  if (std::memcmp(file.data(), magic.data(), 8) != 0)
    throw CacheCorrupt(path.string() + ": bad magic");
  const std::span<const std::uint8_t> body(file.data(), file.size() - 4);
  ByteReader tail(std::span<const std::uint8_t>(file).subspan(file.size() - 4));
  if (crc32(body) != tail.u32()) throw CacheCorrupt(path.string() + ": checksum mismatch");
  ByteReader head(body.subspan(8));
  if (head.u32() != version) throw CacheCorrupt(path.string() + ": unsupported version");
  const std::uint64_t length = head.u64();
  if (length != body.size() - header) throw CacheCorrupt(path.string() + ": length mismatch");
  return {body.begin() + header, body.end()};
}

}  // namespace ckd
