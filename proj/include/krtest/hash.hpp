#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace krtest {

// 64-bit FNV-1a. Used for content fingerprints and tuple ids; stable across
// platforms and runs, unlike std::hash.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= static_cast<uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string to_hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline std::string fingerprint(std::string_view bytes) { return to_hex64(fnv1a64(bytes)); }

}  // namespace krtest
