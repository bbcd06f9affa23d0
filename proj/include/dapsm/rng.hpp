#pragma once

#include <cmath>
#include <cstdint>

namespace dapsm {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Fold extra values into a seed. Used to derive independent per-replicate
// streams from (base_seed, cell_index, replicate_index).
inline std::uint64_t mix_seed(std::uint64_t seed) {
    std::uint64_t s = seed;
    return detail::splitmix64(s);
}

template <typename... Rest>
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) {
    std::uint64_t s = seed;
    std::uint64_t h = detail::splitmix64(s) ^ (next + 0x9E3779B97F4A7C15ULL);
    return mix_seed(h, rest...);
}

// xoshiro256++ with splitmix64 seeding. Self-contained so that simulation
// streams do not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + uniform() * (hi - lo);
    }

    // Standard normal via Box-Muller. Consumes exactly two uniforms per
    // draw; the sine partner is discarded to keep stream accounting simple.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) {
        return uniform() < p;
    }

private:
    std::uint64_t state_[4];
};

}  // namespace dapsm
