#pragma once

#include <cstdint>
#include <string_view>

namespace treeattn {

// xoshiro256** with splitmix64 seeding. Written out here because the
// standard <random> distributions are not bit-portable across library
// implementations, and every run must be reproducible from its seed alone.
//
// All randomness in a run flows from one master seed through named
// substreams (init, dropout, shuffle, embed_init, ...), so components can be
// re-seeded and tested in isolation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derives an independent stream from (seed, name, a, b). Same inputs,
  // same stream.
  static Rng substream(std::uint64_t seed, std::string_view name,
                       std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double next_double();

  double uniform(double lo, double hi);

  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
};

}  // namespace treeattn
