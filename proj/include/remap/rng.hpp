#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace remap {

// splitmix64 finalizer. Used for seed derivation and cheap content mixing.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the i-th independent worker/sample under a base seed.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  return mix64(base ^ mix64(index + 0x517cc1b727220a95ULL));
}

// mt19937_64 with explicit output mappings. The std:: distributions are
// implementation-defined, so every mapping we rely on is written out here;
// the engine itself is specified bit-for-bit by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // [0, n). Floor mapping; bias is < 2^-53 * n and irrelevant here.
  int uniform_int(int n) { return static_cast<int>(uniform01() * n); }

  // Standard normal via Box-Muller, pair cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    // keep log() away from 0
    while (u1 <= 0x1.0p-60) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace remap
