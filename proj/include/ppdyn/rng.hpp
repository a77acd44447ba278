#pragma once

#include <cstdint>

namespace ppdyn {

// Counter-based generator: every draw is a pure function of (seed, counter),
// so disorder at a lattice site never depends on evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_pair(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(splitmix64(seed) ^ (counter * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

/// Uniform on [0,1) with 53 random bits.
inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(hash_pair(seed, counter) >> 11) * 0x1.0p-53;
}

/// Counter stream for sequential use; `split` derives an independent child stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  double uniform() { return uniform01(seed_, counter_++); }
  std::uint64_t next() { return hash_pair(seed_, counter_++); }
  CounterRng split(std::uint64_t key) const { return CounterRng(hash_pair(seed_ ^ 0x5851f42d4c957f2dULL, key)); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace ppdyn
