#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "posesdf/errors.hpp"

namespace posesdf {

// Deterministic RNG. The mt19937_64 stream is pinned by the standard; the
// std:: distributions are not, so all value mappings are explicit here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, pair cached. u is kept away from 0 so log stays finite.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = 1.0 - uniform();
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n), rejection sampled (no modulo bias).
  int64_t index(int64_t n) {
    require(n > 0, "rng: index() needs n > 0");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t lim = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= lim);
    return static_cast<int64_t>(x % un);
  }

  // splitmix64 finalizer; used to derive independent substreams from
  // (seed, stream ids) without correlating mt19937 states.
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace posesdf
