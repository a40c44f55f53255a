#pragma once

#include <cmath>
#include <cstdint>

namespace lobflux {

// Counter-based splittable generator built on the splitmix64 finalizer.
// Streams derived by hashing (base_seed, stream_index) are statistically
// independent and do not depend on scheduling order, which is what makes the
// ensemble reductions bitwise reproducible.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Stream for path/worker `index` under a common base seed.
  static SplitMix64 stream(std::uint64_t base_seed, std::uint64_t index) {
    std::uint64_t key = mix(base_seed ^ (0xA0761D6478BD642FULL * (index + 1)));
    return SplitMix64(key);
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0,1); never returns 0 or 1 exactly.
  double next_double() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace lobflux
