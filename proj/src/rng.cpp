#include "tminfer/rng.hpp"

#include <cmath>
#include <numbers>

namespace tminfer {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return splitmix64(master ^ splitmix64(tag));
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t bound) {
  // floor(u * bound) keeps the draw count at exactly one engine call
  auto i = static_cast<std::uint64_t>(uniform() * static_cast<double>(bound));
  return i < bound ? i : bound - 1;
}

Rng Rng::split(std::uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

}  // namespace tminfer
