#ifndef KNNCLEAN_RNG_HPP
#define KNNCLEAN_RNG_HPP

#include <cstdint>

namespace knnclean {

// Counter-based randomness: every draw is a pure function of
// (seed, stream, index), so results never depend on visiting order.

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                                     std::uint64_t index) noexcept {
  return mix64(mix64(mix64(seed) ^ stream) ^ index);
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index) noexcept {
  return unit_from_bits(counter_hash(seed, stream, index));
}

/// Uniform integer in [0, bound), bound > 0 (multiply-shift reduction).
constexpr std::uint64_t counter_below(std::uint64_t seed, std::uint64_t stream,
                                      std::uint64_t index, std::uint64_t bound) noexcept {
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(counter_hash(seed, stream, index)) * bound;
  return static_cast<std::uint64_t>(wide >> 64);
}

/// Child seed for a named sub-task (episode, epoch, layer, ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return counter_hash(seed, 0x5eedULL, tag);
}

}  // namespace knnclean

#endif  // KNNCLEAN_RNG_HPP
