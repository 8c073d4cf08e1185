#pragma once

// Shared vocabulary types, error hierarchy and deterministic random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hintrl {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

/// Invalid configuration value (bad difficulty, temperature <= 0, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (out-of-vocabulary token, shape mismatch, bad file).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Broken internal contract, e.g. a trajectory scored under a context it
/// cannot belong to.
struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Non-finite loss or parameters. `what()` carries a diagnostic dump.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derives an independent stream seed from a base seed and a path of
/// indices. Stable across platforms and thread schedules.
template <typename... Ix>
std::uint64_t derive_seed(std::uint64_t base, Ix... path) {
  std::uint64_t s = detail::splitmix64(base);
  ((s = detail::splitmix64(s ^ (static_cast<std::uint64_t>(path) + 0x632be59bd9b4e019ULL))), ...);
  return s;
}

/// mt19937_64 with platform-independent derived draws (the standard
/// distributions are implementation-defined, so they are avoided).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InternalError("Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace hintrl
