#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace elink {

/// Counter-based generator: output n is mix(key, n), so a stream is fully
/// determined by its key and position. Streams for independent consumers
/// are derived with fork(), never by sharing one stream.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  /// Child stream keyed by (this key, tag); does not advance this stream.
  Rng fork(std::uint64_t tag) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(tag * 0xD1B54A32D192ED03ULL + 1));
    return child;
  }
  template <class... Tags>
  Rng fork(std::uint64_t first, Tags... rest) const {
    if constexpr (sizeof...(rest) == 0) {
      return fork(first);
    } else {
      return fork(first).fork(static_cast<std::uint64_t>(rest)...);
    }
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(*this);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(*this);
  }

  std::uint64_t position() const noexcept { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace elink
