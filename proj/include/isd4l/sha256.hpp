#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace isd4l {

// Incremental SHA-256 (FIPS 180-4). Used for content digests of patch sets,
// weight files and reports; not a security boundary.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* bytes, std::size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update(const std::vector<std::uint8_t>& v) { update(v.data(), v.size()); }

  // Finalizes and returns the lowercase hex digest. The object must be
  // reset() before reuse.
  std::string hex_digest();

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t h_[8];
  std::uint8_t buffer_[64];
  std::size_t buffer_len_ = 0;
  std::uint64_t total_len_ = 0;
};

std::string sha256_hex(const void* bytes, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace isd4l
