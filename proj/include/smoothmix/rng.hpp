#pragma once

#include <cstdint>
#include <random>

namespace smoothmix {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic stream for (seed, stream index). Shards of a Monte Carlo
/// run use consecutive stream indices so the draws do not depend on how
/// shards are scheduled onto workers.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    std::uint64_t next() { return engine_(); }
    void discard(unsigned long long k) { engine_.discard(k); }

private:
    std::mt19937_64 engine_;
};

}  // namespace smoothmix
