#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cdpd/core/common.hpp"

namespace cdpd {

// Deterministic, platform-independent random source. The standard <random>
// distributions are implementation-defined, so all draws are hand-rolled on
// top of splitmix64/xoshiro256**. Streams are derived by name or index so that
// workers, cases and parameters each own an independent sequence.

inline u64 splitmix64(u64& state) {
    u64 z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline u64 fnv1a64(std::string_view s) {
    u64 h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    explicit Rng(u64 seed = 0) {
        u64 sm = seed;
        for (auto& s : s_) s = splitmix64(sm);
    }

    static Rng from_stream(u64 seed, std::string_view stream) {
        u64 mix = seed;
        u64 a = splitmix64(mix);
        return Rng(a ^ fnv1a64(stream));
    }

    Rng derive(std::string_view stream) const {
        return Rng(s_[0] ^ (s_[2] * 0x9e3779b97f4a7c15ULL) ^ fnv1a64(stream));
    }
    Rng derive(u64 index) const {
        u64 mix = s_[1] + 0x632be59bd9b4e019ULL * (index + 1);
        return Rng(splitmix64(mix) ^ s_[3]);
    }

    u64 next_u64() {
        const u64 result = rotl(s_[1] * 5, 7) * 9;
        const u64 t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1). 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    i64 uniform_int(i64 lo, i64 hi) {
        CDPD_CHECK(hi >= lo, "uniform_int: empty range [", lo, ", ", hi, "]");
        u64 span = u64(hi - lo) + 1;
        // Rejection sampling keeps the draw exactly uniform.
        u64 limit = (~u64(0) / span) * span;
        u64 v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + i64(v % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call (the pair's second half is discarded to
    // keep stream consumption independent of call parity).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <class T>
    void fill_normal(T* dst, i64 n, double mean, double stddev) {
        for (i64 i = 0; i < n; ++i) dst[i] = T(normal(mean, stddev));
    }
    template <class T>
    void fill_uniform(T* dst, i64 n, double lo, double hi) {
        for (i64 i = 0; i < n; ++i) dst[i] = T(uniform(lo, hi));
    }

    std::vector<i64> permutation(i64 n) {
        std::vector<i64> p(n);
        for (i64 i = 0; i < n; ++i) p[i] = i;
        for (i64 i = n - 1; i > 0; --i) {
            i64 j = uniform_int(0, i);
            std::swap(p[i], p[j]);
        }
        return p;
    }

private:
    static u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }
    u64 s_[4];
};

} // namespace cdpd
