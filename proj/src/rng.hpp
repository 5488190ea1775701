#pragma once

#include <cmath>
#include <cstdint>

namespace bdm {

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, step, index), so two samplers sharing a seed see identical
// noise at identical timesteps regardless of call order. Several exact
// equivalence tests (blend ratio 0, CFG w=0, zero-init merge) rely on this.
namespace rng {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream tags keep the chain, the prior fork, blend selection, training and
// initial-noise draws from ever colliding on the same counters.
enum class Stream : uint64_t {
    chain = 1,
    prior_fork = 2,
    blend = 3,
    init = 4,
    train = 5,
    data = 6,
    langevin = 7,
};

inline uint64_t mix(uint64_t seed, Stream stream, uint64_t step, uint64_t index) {
    uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dull);
    h = splitmix64(h ^ static_cast<uint64_t>(stream));
    h = splitmix64(h ^ (step + 0x9e3779b97f4a7c15ull));
    h = splitmix64(h ^ (index + 0x165667b19e3779f9ull));
    return h;
}

// Uniform in (0, 1]; never returns 0 so log() below is safe.
inline double uniform(uint64_t seed, Stream stream, uint64_t step, uint64_t index) {
    const uint64_t h = mix(seed, stream, step, index);
    return static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
}

// Standard normal via Box-Muller (cosine branch).
inline double normal(uint64_t seed, Stream stream, uint64_t step, uint64_t index) {
    const uint64_t h = mix(seed, stream, step, index);
    const uint64_t h2 = splitmix64(h ^ 0x2545f4914f6cdd1dull);
    const double u1 = static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Stateful convenience wrapper over the counter scheme; used where a plain
// sequential generator is the natural interface (data generation, training).
class Sequence {
public:
    Sequence(uint64_t seed, Stream stream, uint64_t step = 0)
        : seed_(seed), stream_(stream), step_(step) {}

    double uniform() { return rng::uniform(seed_, stream_, step_, counter_++); }
    double normal() { return rng::normal(seed_, stream_, step_, counter_++); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        const uint64_t h = mix(seed_, stream_, step_, counter_++);
        return h % n;  // n << 2^64 everywhere we use this; modulo bias is negligible
    }

    uint64_t raw() { return mix(seed_, stream_, step_, counter_++); }

private:
    uint64_t seed_;
    Stream stream_;
    uint64_t step_;
    uint64_t counter_ = 0;
};

}  // namespace rng
}  // namespace bdm
