#pragma once

#include <cstdint>
#include <string_view>

namespace kervolt {

// Deterministic xoshiro256** generator. Distribution helpers are hand-rolled
// (no std::<distribution>) so sequences are identical across standard
// libraries and platforms for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // standard normal, Box-Muller
  int uniform_int(int lo, int hi);       // inclusive range

 private:
  std::uint64_t s_[4];
};

// Stable sub-seed derivation: hash of (base, tag, index). Consumers of a
// single user-facing seed each derive their own stream with a distinct tag.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::uint64_t index = 0);

}  // namespace kervolt
