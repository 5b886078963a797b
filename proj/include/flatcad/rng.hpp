#pragma once

#include <cstdint>
#include <random>

namespace flatcad {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Every random decision draws from its own (seed, stream, iteration) engine so
// the streams stay independent: reseeding one never perturbs another.
inline Rng make_engine(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t iteration = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ (stream * 0xd1342543de82ef95ULL + 1));
    s = splitmix64(s ^ (iteration * 0x9e3779b97f4a7c15ULL + 1));
    return Rng(s);
}

}  // namespace flatcad
