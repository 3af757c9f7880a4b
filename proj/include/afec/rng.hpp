#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace afec {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream key from a parent key and a stream id.
constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t stream) {
  return splitmix64(splitmix64(key) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// Stream ids used across the library. Keeping them in one place avoids
// accidental key collisions between otherwise unrelated consumers.
namespace streams {
inline constexpr std::uint64_t kLayerInit = 0x100;
inline constexpr std::uint64_t kHeadInit = 0x10000;
inline constexpr std::uint64_t kShuffle = 0x200;
inline constexpr std::uint64_t kExpansion = 0x300;
inline constexpr std::uint64_t kClusterCenter = 0x400;
inline constexpr std::uint64_t kSample = 0x500;
inline constexpr std::uint64_t kSplit = 0x600;
inline constexpr std::uint64_t kLayout = 0x700;
inline constexpr std::uint64_t kProbe = 0x800;
inline constexpr std::uint64_t kFiniteDiff = 0x900;
}  // namespace streams

/// Counter-based generator: the i-th draw is a pure function of (key, i),
/// so streams can be split and replayed without carrying mutable state
/// across module boundaries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  CounterRng split(std::uint64_t stream) const { return CounterRng(derive_key(key_, stream)); }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    // Lemire's multiply-shift; bias is negligible for the sizes used here.
    return static_cast<std::size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

template <typename It>
void shuffle(It first, It last, CounterRng& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace afec
