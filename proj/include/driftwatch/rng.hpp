#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>

// Deterministic random number generation.
//
// Every simulation in this library must reproduce bit-identically from a
// 64-bit seed, across platforms and across thread counts. The std <random>
// engines are portable but the std distributions are not (their draw order
// is implementation defined), so we keep a small fixed stack: splitmix64
// for seeding/mixing and xoshiro256++ as the workhorse generator.

namespace driftwatch {

/// One splitmix64 step: advances `state` and returns the next output.
inline std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives an independent child seed from a base seed and a stream index.
/// Used wherever work is split into parallel or per-replicate units so that
/// results do not depend on scheduling or loop order. Returns a mixed
/// splitmix64 output, never the raw state: the state is linear in `stream`,
/// and handing linearly related seeds to the generator would make adjacent
/// streams start from overlapping expansion words.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    std::uint64_t s = base + 0x9E3779B97F4A7C15ull * (stream + 1);
    (void)splitmix64_next(s);
    return splitmix64_next(s);
}

/// Two-level variant for (unit, subunit) numbering, e.g. (replicate, method).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
    return derive_seed(derive_seed(base, a), b);
}

/// xoshiro256++ (Blackman & Vigna). Fast, 256-bit state, passes BigCrush.
class Xoshiro256pp {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256pp(std::uint64_t seed = 1) noexcept { reseed(seed); }

    /// Restores an exact generator state, e.g. a reference vector.
    explicit Xoshiro256pp(const std::array<std::uint64_t, 4>& state) {
        if ((state[0] | state[1] | state[2] | state[3]) == 0)
            throw std::invalid_argument("Xoshiro256pp: state must not be all zero");
        for (int i = 0; i < 4; ++i) s_[i] = state[i];
    }

    void reseed(std::uint64_t seed) noexcept {
        // Expand the seed through splitmix64 as recommended by the authors;
        // guarantees a nonzero state for any seed.
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64_next(sm);
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    std::uint64_t operator()() noexcept { return next(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    static constexpr std::uint64_t min() noexcept { return 0; }
    static constexpr std::uint64_t max() noexcept {
        return std::numeric_limits<std::uint64_t>::max();
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

/// Bernoulli(p) draw. Exact to double resolution of p.
inline bool bernoulli(Xoshiro256pp& rng, double p) noexcept {
    return rng.next_double() < p;
}

} // namespace driftwatch
