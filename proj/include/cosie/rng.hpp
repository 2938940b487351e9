#ifndef COSIE_RNG_HPP
#define COSIE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace cosie {

/// SplitMix64 finalizer. Bijective on 64-bit words.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds an ordered list of words into one seed; mix_seed(a, b) != mix_seed(b, a).
inline constexpr std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w + 0x9e3779b97f4a7c15ULL));
  return h;
}

/// Counter-based random stream: draw number c of stream `key` is a pure
/// function of (key, c), so any replicate can be regenerated in isolation.
class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key = 0) noexcept : key_(key) {}

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

  /// Independent child stream; children of the same parent with distinct
  /// ids never share draws.
  Stream substream(std::uint64_t id) const noexcept { return Stream(mix_seed({key_, id})); }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift; the bias is < bound / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cosie

#endif  // COSIE_RNG_HPP
