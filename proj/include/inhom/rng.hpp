#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace inhom {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Seed of a named stream derived from the global seed. Streams are
/// independent of each other, so adding a new consumer never shifts an
/// existing one.
constexpr std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream) {
  return detail::splitmix64(detail::splitmix64(global_seed) ^ detail::fnv1a(stream));
}

inline Rng make_rng(std::uint64_t global_seed, std::string_view stream) {
  return Rng{derive_seed(global_seed, stream)};
}

}  // namespace inhom
