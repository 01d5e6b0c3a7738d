#include "pacq/common/binio.hpp"

#include <array>
#include <cstring>

namespace pacq {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}

const std::array<std::uint32_t, 256>& crc_table() {
  static const auto table = make_crc_table();
  return table;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = seed ^ 0xffffffffu;
  const auto& t = crc_table();
  for (std::size_t i = 0; i < len; ++i) c = t[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

BinWriter::BinWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw DataError(DataError::Kind::Other, "cannot open for writing: " + path);
}

void BinWriter::bytes(const void* data, std::size_t len) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out_) throw DataError(DataError::Kind::Other, "write failed: " + path_);
  if (crc_active_) crc_ = crc32(data, len, crc_);
}

void BinWriter::u16(std::uint16_t v) { bytes(&v, 2); }
void BinWriter::u32(std::uint32_t v) { bytes(&v, 4); }
void BinWriter::u64(std::uint64_t v) { bytes(&v, 8); }
void BinWriter::i64(std::int64_t v) { bytes(&v, 8); }
void BinWriter::f64(double v) { bytes(&v, 8); }

void BinWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  if (!s.empty()) bytes(s.data(), s.size());
}

void BinWriter::f64_array(const std::vector<double>& v) {
  u64(v.size());
  if (!v.empty()) bytes(v.data(), v.size() * sizeof(double));
}

void BinWriter::write_crc() {
  std::uint32_t c = crc_;
  crc_active_ = false;
  u32(c);
}

void BinWriter::close() {
  out_.close();
  if (!out_) throw DataError(DataError::Kind::Other, "close failed: " + path_);
}

BinReader::BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw DataError(DataError::Kind::Other, "cannot open for reading: " + path);
}

void BinReader::bytes(void* data, std::size_t len) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (static_cast<std::size_t>(in_.gcount()) != len)
    throw DataError(DataError::Kind::Truncated, "truncated file: " + path_);
  if (crc_active_) crc_ = crc32(data, len, crc_);
}

std::uint16_t BinReader::u16() { std::uint16_t v; bytes(&v, 2); return v; }
std::uint32_t BinReader::u32() { std::uint32_t v; bytes(&v, 4); return v; }
std::uint64_t BinReader::u64() { std::uint64_t v; bytes(&v, 8); return v; }
std::int64_t BinReader::i64() { std::int64_t v; bytes(&v, 8); return v; }
double BinReader::f64() { double v; bytes(&v, 8); return v; }

std::string BinReader::str() {
  std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n) bytes(s.data(), n);
  return s;
}

std::vector<double> BinReader::f64_array() {
  std::uint64_t n = u64();
  if (n > (1ull << 32))
    throw DataError(DataError::Kind::Truncated, "implausible array length in " + path_);
  std::vector<double> v(n);
  if (n) bytes(v.data(), n * sizeof(double));
  return v;
}

void BinReader::check_crc(const std::string& what) {
  std::uint32_t computed = crc_;
  crc_active_ = false;
  std::uint32_t stored = u32();
  if (stored != computed)
    throw DataError(DataError::Kind::Checksum, what + ": checksum mismatch in " + path_);
}

void BinReader::expect_magic(const char magic[4], const std::string& what) {
  char buf[4];
  bytes(buf, 4);
  if (std::memcmp(buf, magic, 4) != 0)
    throw DataError(DataError::Kind::Magic, what + ": bad magic in " + path_);
}

}  // namespace pacq
