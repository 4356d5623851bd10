#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rfslam {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based seed derivation: the same (base, ids...) always yields the same stream,
/// independent of the order in which streams are requested or which thread asks.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = mix64(base);
    for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
    return h;
}

[[nodiscard]] inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
    return Rng(derive_seed(base, ids));
}

namespace stream {
inline constexpr std::uint64_t trajectory = 1;
inline constexpr std::uint64_t measurements = 2;
inline constexpr std::uint64_t particle_init = 3;
inline constexpr std::uint64_t particle_motion = 4;
inline constexpr std::uint64_t resampling = 5;
}  // namespace stream

}  // namespace rfslam
