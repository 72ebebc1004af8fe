#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nlexit {

using Rng = std::mt19937_64;

/// Independent stream for work item `index` under a run-level `seed`.
/// Streams depend only on (seed, index), never on scheduling.
inline Rng stream_for(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x6e6c6578u};
    return Rng(seq);
}

/// Uniform on [0, 1) with 53 random bits.
template <typename Gen>
double uniform01(Gen& gen) {
    static_assert(Gen::max() - Gen::min() == ~std::uint64_t{0}, "expects a 64-bit engine");
    return static_cast<double>((gen() - Gen::min()) >> 11) * 0x1.0p-53;
}

/// Exponential waiting time with the given rate.
template <typename Gen>
double exponential(Gen& gen, double rate) {
    return -std::log1p(-uniform01(gen)) / rate;
}

}  // namespace nlexit
