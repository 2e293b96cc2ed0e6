#pragma once

// Deterministic random numbers for simulation. std::mt19937_64 has a fixed
// bit stream across platforms, but the std distributions do not, so we map
// raw 64-bit draws to doubles ourselves. Episode seeds are derived from a
// master seed with a splitmix64 round so batches can run in any order (or in
// parallel) and still reproduce bit for bit.

#include <cstdint>
#include <random>

namespace tems {

inline uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

class DetRng {
 public:
  explicit DetRng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1): take the top 53 bits so the value is exact.
  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tems
