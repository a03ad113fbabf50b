#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace loadshare {

/// Thrown when an argument is outside the physical/mathematical domain of an
/// operation (e.g. pressure ratio below 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown for invalid configuration values; carries the offending key path.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Thrown when a linear-algebra step fails beyond recovery (e.g. Cholesky
/// after jitter escalation).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by measurement back-calculation on physically invalid inputs.
class InvalidMeasurement : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A station target that cannot be realized by the configured station.
class InfeasibleTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Folds any number of 64-bit parts into one seed. Deterministic and
/// platform-independent.
inline std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = 0x8E51ECA6B7D8F2A1ull;
  for (std::uint64_t p : parts) {
    s ^= p + 0x9E3779B97F4A7C15ull + (s << 6) + (s >> 2);
    (void)splitmix64(s);
  }
  return splitmix64(s);
}

/// Small deterministic stream. All randomness in the project flows through
/// this so runs are bit-reproducible across platforms.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be >= 1.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t bound = n * ((~std::uint64_t{0}) / n);
    std::uint64_t u = next_u64();
    while (u >= bound) u = next_u64();
    return u % n;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace rng
}  // namespace loadshare
