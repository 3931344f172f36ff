#ifndef ABCM_RNG_HPP
#define ABCM_RNG_HPP

#include <cmath>
#include <cstdint>

namespace abcm {

// Splittable counter-based generator (splitmix64 step function). The stream
// depends only on the 64-bit seed, so identical seeds give identical streams
// on every platform. All randomness in the library flows through this type;
// nothing uses <random> distributions, whose output is
// implementation-defined.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t seed() const { return state_; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // An independent generator for substream `index`; the parent stream is
  // not advanced.
  RngState split(std::uint64_t index) const {
    std::uint64_t z = state_ ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return RngState(z ^ (z >> 31));
  }

  // Uniform in [0, 1), 24 bits of resolution (exact in float).
  float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  // Uniform in (0, 1); never returns an endpoint, safe under log().
  float uniform_open() {
    return (static_cast<float>(next_u64() >> 40) + 0.5f) * 0x1.0p-24f;
  }

  float uniform_range(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  std::uint32_t uniform_index(std::uint32_t n) {
    return static_cast<std::uint32_t>(next_u64() % n);
  }

  // Standard normal via Box-Muller.
  float normal() {
    float u1 = uniform_open();
    float u2 = uniform();
    return std::sqrt(-2.0f * std::log(u1)) *
           std::cos(6.28318530717958647692f * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace abcm

#endif  // ABCM_RNG_HPP
