#pragma once

#include <cstdint>
#include <initializer_list>

namespace sacl {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: every draw is a pure function of (seed, keys...),
/// so draws do not depend on evaluation order or thread schedule.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(std::initializer_list<std::uint64_t> keys) const;

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform(std::initializer_list<std::uint64_t> keys) const;

  /// Standard normal via Box-Muller on two keyed uniforms.
  double normal(std::initializer_list<std::uint64_t> keys) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Seed of Monte-Carlo run `index` under `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

}  // namespace sacl
