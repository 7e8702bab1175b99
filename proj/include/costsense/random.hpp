#pragma once

#include <cstdint>
#include <random>

namespace costsense {

/// Derive an independent stream seed from a base seed and an index
/// (splitmix64 finalizer). Used so per-input work can run in parallel
/// while producing the same draws as a serial loop.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

}  // namespace costsense
