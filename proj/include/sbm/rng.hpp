#pragma once

#include <cstdint>
#include <random>

namespace sbm {

using Rng = std::mt19937_64;

/// Deterministic per-realization stream: the same (master_seed, index) yields
/// the same generator state, distinct indices yield independent streams.
inline Rng seed_stream(std::uint64_t master_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace sbm
