#pragma once

#include <cstdint>
#include <random>

namespace sflab {

using Engine = std::mt19937_64;

/// Independent generator for sub-stream `stream` of a run seeded with `seed`.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Engine(seq);
}

// Stream tags keep the different consumers of one user seed disjoint.
inline constexpr std::uint64_t kStreamDataset = 0x5a17;
inline constexpr std::uint64_t kStreamTeacher = 0x7eac;
inline constexpr std::uint64_t kStreamInit = 0x1417;
inline constexpr std::uint64_t kStreamMonteCarlo = 0x3c00000000ULL;

}  // namespace sflab
