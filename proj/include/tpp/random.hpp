#pragma once

#include <cstdint>
#include <initializer_list>

namespace tpp {

// SplitMix64 finalizer; used to derive independent per-item seeds from a
// master seed so that results do not depend on evaluation order.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> salt) noexcept {
  std::uint64_t h = mix_seed(seed);
  for (auto s : salt) h = mix_seed(h ^ s);
  return h;
}

}  // namespace tpp
