#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sgem {

// splitmix64: the usual 64-bit finalizer, used both as a stream generator and
// to derive independent stage seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a named pipeline stage: master seed mixed with the stage name.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
    std::uint64_t s = master ^ fnv1a64(stage);
    return splitmix64(s);
}

// Deterministic RNG with portable output. std::mt19937 would be portable too,
// but the standard distributions are not; all conversions here are explicit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        for (int i = 0; i < 4; ++i) splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0,1) with 53-bit resolution.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [0,1) with 24-bit resolution.
    float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    /// Uniform integer in [0, bound), bound > 0. Rejection-free scaled draw.
    std::uint64_t next_below(std::uint64_t bound) {
        // 128-bit multiply-shift; bias is negligible at desk scale but reject
        // anyway to keep the draw exact.
        while (true) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * bound;
            std::uint64_t lo = static_cast<std::uint64_t>(m);
            if (lo >= bound || lo >= std::uint64_t(-bound) % bound)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

    int next_int(int lo, int hi_inclusive) {
        return lo + int(next_below(std::uint64_t(hi_inclusive - lo + 1)));
    }

    /// Standard normal via Box-Muller (both draws consumed, one returned).
    double next_normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = std::size_t(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

inline double Rng::next_normal() {
    // Box-Muller on two fresh uniforms; discard the sibling draw so the
    // stream advances by a fixed amount per call.
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 1e-300) u1 = next_double();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

} // namespace sgem
