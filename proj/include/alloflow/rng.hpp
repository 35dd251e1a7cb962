#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "alloflow/vec.hpp"

namespace alloflow {

// splitmix64, used for seeding and for deriving per-component sub-seeds.
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

// Deterministic sub-seed split: changing one stage's component name never
// perturbs another stage's stream.
inline std::uint64_t sub_seed(std::uint64_t global_seed, std::string_view component) {
    std::uint64_t s = global_seed ^ fnv1a64(component);
    return splitmix64(s);
}

// xoshiro256++ with a fully specified normal sampler, so every draw is
// bit-reproducible from the seed alone (std::normal_distribution is
// implementation-defined and would break byte-identical artifacts).
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
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

    // uniform in [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform in (0, hi]: complements uniform01 so 0 is excluded and hi attainable
    double uniform_open0(double hi) { return hi * (1.0 - uniform01()); }

    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Marsaglia polar; the spare value is cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    Vec normal_vec(std::size_t dim) {
        Vec r(dim);
        for (auto& x : r) x = normal();
        return r;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace alloflow
