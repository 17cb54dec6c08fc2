#pragma once

#include <cmath>
#include <cstdint>

namespace nilmformer {

// Counter-based stream: draw k is a pure function of (seed, k), so identical
// seeds give identical sequences on every platform and the full state is just
// two integers. Mixing follows splitmix64.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * ++counter_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval (0, 1); safe as a log() argument.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; always consumes exactly two draws, nothing is cached.
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Independent child stream; children with distinct salts do not collide.
  RngStream fork(std::uint64_t salt) const {
    std::uint64_t z = seed_ ^ (0x9e3779b97f4a7c15ull + salt * 0xbf58476d1ce4e5b9ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return RngStream(z ^ (z >> 31));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace nilmformer
