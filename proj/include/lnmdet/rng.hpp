#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace lnmdet {

// splitmix64; used to derive independent stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stable 64-bit hash for tagging rng streams by purpose ("train", "fisher", ...).
inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Derive a child seed from (seed, tag, index). Each pipeline phase uses its own
// stream so that adding or removing one phase never perturbs the others.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t x = seed ^ hash_tag(tag);
    std::uint64_t a = splitmix64(x);
    x ^= index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull;
    std::uint64_t b = splitmix64(x);
    return a ^ (b + 0x9e3779b97f4a7c15ull);
}

// mt19937_64 with explicit uniform/normal draws. The engine output is fixed by
// the standard; the distributions below avoid the implementation-defined
// std::*_distribution so streams are reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0; rejection sampling keeps it unbiased
    std::uint64_t uniform_index(std::uint64_t n) {
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal via Box-Muller (no cached spare: keeps the stream
    // position a pure function of the draw count)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace lnmdet
