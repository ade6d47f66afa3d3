#pragma once

#include <cstdint>
#include <random>

namespace batchslam {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Counter-based stream split: parallel and serial schedules see identical
/// per-stream sequences.
inline std::mt19937_64 make_stream(std::uint64_t base_seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(base_seed ^ splitmix64(stream + 1)));
}

} // namespace batchslam
