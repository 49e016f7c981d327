#include "promptevo/rng.hpp"

#include <stdexcept>

namespace pevo {

double keyed_unit(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3) {
  const std::uint64_t h = splitmix64_step(mix64(mix64(k1, k2), k3));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::size_t Rng::next_index(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::next_index: n must be positive");
  }
  const std::uint64_t bound = n;
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() / bound * bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

}  // namespace pevo
