#pragma once

#include <cstdint>
#include <random>

namespace tminfer {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed of a named substream of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag);

/// Seedable generator with a fixed draw contract, so traces can be
/// regenerated by any implementation that follows it:
///
///   engine   std::mt19937_64 seeded with one 64-bit value
///   uniform  (engine() >> 11) * 2^-53, in [0, 1)
///   normal   Box-Muller cosine branch over two consecutive uniforms u1, u2:
///            sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
///
/// split(tag) returns an independent stream seeded with derive_seed(seed, tag).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();
  double normal();
  /// Uniform index in [0, bound).
  std::uint64_t index(std::uint64_t bound);

  Rng split(std::uint64_t tag) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace tminfer
