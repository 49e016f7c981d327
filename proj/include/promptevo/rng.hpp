#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace pevo {

// FNV-1a over the raw bytes. Also used by the feature-hash encoder, so the
// constants must stay fixed.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64_step(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Order-sensitive combiner: mix64(a, b) != mix64(b, a) in general.
constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return splitmix64_step(splitmix64_step(a) ^ b);
}

// One-shot keyed uniform draw in [0, 1). Stateless, so concurrent callers
// cannot race; used by the synthetic environment.
double keyed_unit(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3);

// Deterministic stream derived from (seed, label). Identical pairs produce
// identical draw sequences on every platform: mt19937_64 output is fully
// specified and all distribution shaping below is hand-rolled (the standard
// library's distribution objects are not portable across implementations).
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream_label)
      : engine_(mix64(seed, fnv1a64(stream_label))) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53 bits of precision
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform over [0, n); rejection sampling keeps it unbiased
  std::size_t next_index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[next_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pevo
