#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pacq/common/errors.hpp"

namespace pacq {

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// Little-endian binary writer that keeps a running CRC32 of everything
// written after mark_crc_start().
class BinWriter {
 public:
  explicit BinWriter(const std::string& path);

  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void bytes(const void* data, std::size_t len);
  void str(const std::string& s);  // u32 length + raw bytes
  void f64_array(const std::vector<double>& v);

  void mark_crc_start() { crc_ = 0; crc_active_ = true; }
  // Writes the running CRC (not itself included in the CRC).
  void write_crc();

  void close();

 private:
  std::ofstream out_;
  std::string path_;
  std::uint32_t crc_ = 0;
  bool crc_active_ = false;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path);

  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  void bytes(void* data, std::size_t len);
  std::string str();
  std::vector<double> f64_array();

  void mark_crc_start() { crc_ = 0; crc_active_ = true; }
  // Reads the stored CRC and compares with the running one.
  void check_crc(const std::string& what);

  void expect_magic(const char magic[4], const std::string& what);

 private:
  std::ifstream in_;
  std::string path_;
  std::uint32_t crc_ = 0;
  bool crc_active_ = false;
};

}  // namespace pacq
