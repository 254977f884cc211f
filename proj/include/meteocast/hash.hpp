#pragma once

#include <cstddef>
#include <cstdint>

namespace meteo {

// FNV-1a, the integrity and config-identity hash used by every binary
// artifact in the project. Not cryptographic; detects corruption and
// configuration drift only.

inline constexpr std::uint64_t kFnv64Offset = 1469598103934665603ULL;
inline constexpr std::uint64_t kFnv64Prime = 1099511628211ULL;

inline void fnv1a_accumulate(std::uint64_t& h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnv64Prime;
  }
}

inline std::uint64_t fnv1a(const void* data, std::size_t n) {
  std::uint64_t h = kFnv64Offset;
  fnv1a_accumulate(h, data, n);
  return h;
}

}  // namespace meteo
