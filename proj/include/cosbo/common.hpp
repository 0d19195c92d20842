#pragma once

// Shared numeric plumbing: seeded RNG streams, round-trip real formatting,
// angle/interval helpers used across the library.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosbo {

using Rng = std::mt19937_64;

// Named RNG streams derived from one experiment seed. Keeping streams
// separate means a component that consumes more draws (e.g. rollout
// generation) cannot shift the draws seen by another component.
enum class Stream : std::uint32_t {
  env = 1,
  behavior = 2,
  init = 3,
  rollout = 4,
  batch = 5,
  policy = 6,
  eval = 7,
  model = 8,
  misc = 9,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double clip(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Maps an angle to (-pi, pi].
inline double wrap_angle(double x) {
  const double two_pi = 2.0 * M_PI;
  x = std::fmod(x, two_pi);
  if (x <= -M_PI) x += two_pi;
  if (x > M_PI) x -= two_pi;
  return x;
}

// Full round-trip decimal encoding; the on-disk formats require that
// load(save(x)) == x bitwise for every finite double.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

inline double parse_real(const std::string& tok, bool* ok) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  *ok = (end != nullptr && *end == '\0' && !tok.empty());
  return v;
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace cosbo
