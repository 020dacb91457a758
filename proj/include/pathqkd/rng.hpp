#pragma once

#include <cstdint>
#include <random>

namespace pathqkd {

// Every simulation run owns one of these; nothing is shared between runs.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed for (stream, index) under a parent seed. Independent of the
// order in which children are created.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(splitmix64(parent) ^ (stream * 0xd1b54a32d192ed03ULL)) + index);
}

// Poisson draw that tolerates a zero mean.
inline std::uint64_t poisson(Rng& rng, double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(rng);
}

}  // namespace pathqkd
