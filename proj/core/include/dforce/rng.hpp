#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dforce {

// Mixes one 64-bit word into a well-spread seed. Used to derive independent
// per-item streams from (root seed, item index) without correlated prefixes.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    return mix64(root ^ mix64(stream + 0x632be59bd9b4e019ull));
}

// Deterministic random source. The engine is the standard mt19937_64 (its
// output sequence is fixed by the language standard); the distributions are
// implemented here explicitly because the standard library's distribution
// objects are implementation-defined and would break cross-toolchain
// reproducibility of stored test values.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_tag_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform double in [0, 1) with 53 bits of precision
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller (trig form), one spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // independent child stream, a pure function of (constructor seed, stream id);
    // does not consume state from this generator
    Rng split(std::uint64_t stream) const {
        return Rng(derive_seed(seed_tag_, stream));
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_tag_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dforce
