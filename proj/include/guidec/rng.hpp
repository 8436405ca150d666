#pragma once

// Deterministic random source shared by every sampler in the project.
//
// All randomness flows through Rng so that a fixed seed reproduces the exact
// same byte stream everywhere: the engine is std::mt19937_64 (whose output is
// pinned by the standard) and doubles are derived from the top 53 bits rather
// than through std::uniform_real_distribution, which is implementation-defined.
//
// Independent streams (one per beam / decoding run) are derived from a root
// seed and a stream index via a splitmix64 finalizer: two streams with
// different indices are decorrelated even for adjacent indices.

#include <cstdint>
#include <random>

namespace guidec {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives the seed for stream `index` of root seed `root`.
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root ^ splitmix64(index + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  static Rng stream(std::uint64_t root, std::uint64_t index) {
    return Rng(stream_seed(root, index));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n). n must be positive.
  std::size_t next_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace guidec
