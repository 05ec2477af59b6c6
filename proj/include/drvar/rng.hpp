#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace drvar {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of an independent stream keyed by (master, key...). The mapping is a
/// pure function of its arguments, so a replicate's draws do not depend on
/// which worker runs it or in what order.
inline constexpr std::uint64_t stream_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Engine make_engine(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Engine(stream_seed(master, keys));
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace drvar
