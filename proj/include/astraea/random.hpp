#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace astraea {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a path of tags
/// (client id, round, epoch, ...). Order of tags matters.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(root);
  for (std::uint64_t tag : path) h = mix64(h ^ mix64(tag + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags, so that different consumers of the same root seed never collide.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSampling = 2;
inline constexpr std::uint64_t kClientTrain = 3;
inline constexpr std::uint64_t kAugment = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kPartition = 6;
inline constexpr std::uint64_t kSynthetic = 7;
inline constexpr std::uint64_t kResample = 8;
}  // namespace stream

}  // namespace astraea
