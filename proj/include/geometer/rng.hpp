#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace geometer {

/// Seeded generator with platform-independent integer/real draws.
///
/// std::uniform_int_distribution and std::shuffle are implementation-defined,
/// so all sampling in the library goes through these helpers instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives an independent stream from a seed and a list of stream keys.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform real in [0, 1).
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  /// First `count` elements of a uniform random permutation of `values`.
  template <typename T>
  std::vector<T> sample_without_replacement(std::span<const T> values, std::size_t count) {
    std::vector<T> pool(values.begin(), values.end());
    for (std::size_t i = 0; i < count && i < pool.size(); ++i) {
      std::size_t j = i + below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(std::min(count, pool.size()));
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace geometer
