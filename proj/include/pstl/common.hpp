#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace pstl {

// Error categories double as CLI exit codes.
enum class errc : int {
  ok = 0,
  generic = 1,
  config = 2,
  missing_input = 3,
  numeric_fault = 4,
  shape_mismatch = 5,
  invalid_argument = 6,
  format = 7,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  errc code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

// ---------------------------------------------------------------- seeded rng

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. All sampling protocols are pinned here rather
// than delegated to std distributions so that a (seed, call sequence) pair
// yields the same draws on any build of this library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // [0, n). n == 1 consumes no draw.
  int64_t uniform_int(int64_t n) {
    require(n >= 1, errc::invalid_argument, "uniform_int: n must be >= 1");
    if (n == 1) return 0;
    const uint64_t range = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<int64_t>(x % range);
  }

  // Box-Muller, two uniforms per call, no cached spare.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Independent child stream; the parent's state is not advanced.
  Rng fork(uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 1))); }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace pstl
