#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace memsense {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits. Independent of the standard
/// library's distribution implementation, so seeded runs reproduce everywhere.
template <typename Engine>
[[nodiscard]] inline double uniform01(Engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Engine>
[[nodiscard]] inline bool bernoulli(Engine& rng, double prob) {
    return uniform01(rng) < prob;
}

/// Uniform index in [0, n) by rejection.
template <typename Engine>
[[nodiscard]] inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

/// FNV-1a, stable across platforms; used to derive per-point seeds.
[[nodiscard]] constexpr std::uint64_t stable_hash(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// splitmix64 finalizer, for turning a seed into independent stream seeds.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace memsense
