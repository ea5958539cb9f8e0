#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "uunet/tensor.hpp"

namespace uunet {

// splitmix64 finalizer; used to derive independent stream seeds from a base
// seed plus arbitrary tag words. Keeps every random draw in the project a
// pure function of (config seed, structural position), which is what makes
// checkpoint resume and re-runs bit-exact.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view s) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t x = mix64(base ^ 0x5851f42d4c957f2dULL);
  x = mix64(x ^ a);
  x = mix64(x ^ b);
  x = mix64(x ^ c);
  return x;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  return derive_seed(base, hash_tag(tag), a, b);
}

// Seeded stream with stateless normal draws (two uniforms per normal, no
// cached spare), so the stream position is always a simple function of the
// number of values drawn.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Bounded draw via modulo; bias is irrelevant here and the result is
  // stable across standard library implementations.
  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

  double normal() {
    // Box-Muller, one value per call.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  void fill_normal(Tensor& t, double mean = 0.0, double std = 1.0) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t[i] = mean + std * normal();
    }
  }

  void fill_uniform(Tensor& t, double lo, double hi) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t[i] = uniform(lo, hi);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace uunet
