#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace fadacs {

// splitmix64 step; the single primitive behind every random stream in this
// project. Any implementation that reproduces this function byte-for-byte
// reproduces all generated datasets and parameter initializations.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a 64-bit over bytes; used to derive named substreams and file digests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Stable named substream seed: splitmix64(seed) xor FNV-1a(name).
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t s = seed;
  return splitmix64(s) ^ fnv1a64(name);
}

// Deterministic stream generator.
//   uniform():   53-bit mantissa uniform in [0,1)
//   normal():    Box-Muller pair, values emitted in order (no rejection step)
class prng {
public:
  explicit prng(std::uint64_t seed) : state_(seed) {}

  // independent substream for a named component, e.g. fork("weather")
  prng fork(const std::string& name) const {
    std::uint64_t s = state_;
    return prng(splitmix64(s) ^ fnv1a64(name));
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n >= 1, via 64-bit modulo (bias < 2^-52 at our n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t state() const { return state_; }

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fadacs
