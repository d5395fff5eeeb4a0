#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace evalkit {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// Streaming SHA-256; used for dataset refs and the content-addressed
// blob store.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, std::size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex_digest();  // finalizes

  static std::string of_string(const std::string& s);
  static std::string of_file(const std::string& path);  // throws IOFailure

 private:
  void process_block(const unsigned char* block);
  std::uint32_t state_[8];
  std::uint64_t bit_count_;
  unsigned char buffer_[64];
  std::size_t buffer_len_;
};

}  // namespace evalkit
