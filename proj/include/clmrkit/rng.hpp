#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace clmrkit {

// Deterministic random source. The engine is std::mt19937_64 (fully specified
// by the standard); all distribution transforms are hand-rolled here so that a
// given seed reproduces bit-identical streams on any platform, which the
// determinism contract depends on.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive, unbiased via rejection
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<int64_t>(next_u64()); // full span
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<int64_t>(x % range);
    }

    // standard normal, Box-Muller (no spare caching, two draws per sample)
    double normal() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Stable seed derivation for workers / per-example streams.
    static uint64_t mix(std::initializer_list<uint64_t> parts) {
        uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (uint64_t p : parts) {
            h ^= splitmix(p + h);
            h = splitmix(h);
        }
        return h;
    }

private:
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

} // namespace clmrkit
