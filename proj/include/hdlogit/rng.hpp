#pragma once

// Keyed random streams: each generator is seeded from (seed, stream, tag), so
// results do not depend on execution order or worker count.

#include <cstdint>
#include <random>

namespace hdlogit {

using Rng = std::mt19937_64;

namespace stream_tag {
inline constexpr std::uint64_t beta = 0x42455441;      // coefficient draws
inline constexpr std::uint64_t data = 0x44415441;      // design and response
inline constexpr std::uint64_t probe = 0x50524f42;     // ProbeFrontier subsamples
inline constexpr std::uint64_t amp = 0x414d5030;       // AMP initialization
inline constexpr std::uint64_t allele = 0x414c4c45;    // SNP allele frequencies
} // namespace stream_tag

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

} // namespace hdlogit
