#pragma once

#include <cstdint>
#include <string_view>

namespace freshcast {

// 64-bit FNV-1a. Used instead of std::hash because the value must be stable
// across standard library implementations (it feeds persisted seeds).
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for a named sub-stream of `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return splitmix64(fnv1a64(label, splitmix64(master)));
}

}  // namespace freshcast
