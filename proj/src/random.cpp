#include "sacl/random.hpp"

#include <cmath>
#include <numbers>

namespace sacl {

std::uint64_t CounterRng::bits(std::initializer_list<std::uint64_t> keys) const {
  std::uint64_t h = mix64(seed_);
  for (const std::uint64_t k : keys) h = mix64(h ^ mix64(k));
  return h;
}

double CounterRng::uniform(std::initializer_list<std::uint64_t> keys) const {
  return static_cast<double>(bits(keys) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::initializer_list<std::uint64_t> keys) const {
  // Two decorrelated lanes hashed from the same key tuple.
  const std::uint64_t base = bits(keys);
  const double u1 = static_cast<double>((mix64(base ^ 0x1ULL) >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(mix64(base ^ 0x2ULL) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace sacl
