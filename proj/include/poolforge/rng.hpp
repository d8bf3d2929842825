#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace poolforge {

// Derives an independent sub-seed from (seed, stream-name) so that the split,
// training, selection and committee stages each consume their own stream and
// changing one stage's randomness does not perturb the others.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a 64
    for (char c : stream) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ull;
    }
    h ^= seed;
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream) {
    return std::mt19937_64(substream_seed(seed, stream));
}

} // namespace poolforge
