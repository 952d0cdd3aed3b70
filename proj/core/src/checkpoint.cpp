#include "vseg/checkpoint.hpp"

#include <cstring>

namespace vseg {
namespace detail {

BinWriter::BinWriter(const std::string& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw RuntimeFailure("io-failure: cannot open for writing: " + path);
}

void BinWriter::bytes(const void* p, std::size_t n) {
  out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out_) throw RuntimeFailure("io-failure: short write: " + path_);
}

void BinWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void BinWriter::close() {
  out_.close();
  if (!out_) throw RuntimeFailure("io-failure: close failed: " + path_);
}

BinReader::BinReader(const std::string& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw ValidationError("cannot open file: " + path);
}

void BinReader::bytes(void* p, std::size_t n) {
  in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n)
    throw ValidationError("malformed checkpoint (truncated): " + path_);
}

std::uint8_t BinReader::u8() {
  std::uint8_t v;
  bytes(&v, 1);
  return v;
}
std::uint32_t BinReader::u32() {
  std::uint32_t v;
  bytes(&v, 4);
  return v;
}
std::int32_t BinReader::i32() {
  std::int32_t v;
  bytes(&v, 4);
  return v;
}
std::int64_t BinReader::i64() {
  std::int64_t v;
  bytes(&v, 8);
  return v;
}
std::uint64_t BinReader::u64() {
  std::uint64_t v;
  bytes(&v, 8);
  return v;
}
double BinReader::f64() {
  double v;
  bytes(&v, 8);
  return v;
}
std::string BinReader::str() {
  const std::uint32_t n = u32();
  if (n > (1u << 20)) throw ValidationError("malformed checkpoint: oversized string");
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

}  // namespace detail

std::uint8_t checkpoint_dtype(const std::string& path) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ValidationError("version-mismatch: checkpoint version " +
                          std::to_string(version) + " in " + path);
  return r.u8();
}

}  // namespace vseg
