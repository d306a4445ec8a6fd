#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fusedet::rng {

// SplitMix64: 64-bit-state generator used for every random draw in this
// project so corpora are reproducible across platforms and languages.
// Constants: increment 0x9E3779B97F4A7C15, finalizer multipliers
// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB (Steele/Lea/Flood, as published
// by Vigna). One step = add the increment, then mix.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound) by rejection (bound > 0).
    std::uint64_t next_below(std::uint64_t bound) {
        std::uint64_t threshold = (-bound) % bound;  // 2^64 mod bound
        std::uint64_t x = next();
        while (x < threshold) x = next();
        return x % bound;
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        next_below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    // Box-Muller, cosine branch only; u1 is mapped into (0, 1] so the log is
    // always finite. Consumes exactly two draws per call.
    double gaussian(double sigma) {
        double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) *
                   std::cos(2.0 * 3.14159265358979323846 * u2);
        return sigma * z;
    }

    // Knuth's multiplication method; fine for the small means used here.
    int poisson(double mean) {
        double limit = std::exp(-mean);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

private:
    std::uint64_t state_;
};

// SplitMix64 finalizer on its own, used to derive independent seed streams.
inline std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Child seed for (stream, index), e.g. one stream per annotator and one
// index per image. Pure function of its inputs.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream,
                            std::uint64_t index) {
    std::uint64_t s = mix(seed ^ (stream + 0x9E3779B97F4A7C15ULL));
    return mix(s ^ (index + 0x9E3779B97F4A7C15ULL));
}

// FNV-1a 64-bit, used for deterministic train/test hashing of image ids.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace fusedet::rng
