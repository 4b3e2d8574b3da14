#pragma once

#include <cmath>
#include <cstdint>

namespace vspair {

// Counter-based deterministic generator (splitmix64 over a keyed counter).
// Identical (seed, stream) and call sequence reproduce the stream bitwise.
// Value semantics: copies advance independently.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : key_(mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^
                 mix(stream * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL))) {}

  uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller on the uniform stream; the second value
  // of each pair is cached, so draws alternate between 2 and 0 uniforms.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Integer in [0, n) without modulo bias worth worrying about at desk scale.
  uint64_t next_below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t v = static_cast<uint64_t>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  // Independent child stream; substream(k) of equal parents agree bitwise.
  Rng substream(uint64_t k) const {
    Rng r(0);
    r.key_ = mix(mix(key_ + k) ^ 0xD1B54A32D192ED03ULL);
    r.counter_ = 0;
    r.has_spare_ = false;
    return r;
  }

 private:
  static uint64_t mix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vspair
