#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dxrank {

// FNV-1a, 64-bit. Used for prompt hashes and tokenizer fingerprints;
// stability across runs matters, cryptographic strength does not.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

inline std::string fnv1a64_hex(std::string_view data) {
  return to_hex(fnv1a64(data));
}

}  // namespace dxrank
