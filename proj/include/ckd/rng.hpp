#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace ckd {

/// Counter-based random stream.
///
/// Draw i (1-based) is `splitmix64(key + i * 0x9E3779B97F4A7C15)` where
/// `key = splitmix64(seed)`, i.e. the SplitMix64 sequence addressed by a
/// counter. Only integer arithmetic is involved, so a seed replays the same
/// bits on every platform. Floating-point draws are built from the top 53
/// bits; normals use the Marsaglia polar method (log and sqrt only).
///
/// Not thread-safe; give each worker its own stream via split().
class RngStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed)) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() noexcept { return mix(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  /// Beta(1, 1), which is Uniform[0, 1).
  double beta11() noexcept { return uniform(); }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream; same (seed, id) always yields the same child.
  RngStream split(std::uint64_t stream_id) const noexcept {
    return RngStream(mix(seed_ ^ mix(stream_id + kGolden)));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ckd
