#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace toalign {

// Deterministic splitmix64 generator. Each experiment owns one root Rng and
// derives independent child streams per consumer (init, dropout, data, ...)
// via split(), so adding draws to one consumer never perturbs another and
// runs are bit-reproducible given the same seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(mix(seed ^ 0x6a09e667f3bcc909ull)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per value.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Unbiased integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~0ull - ~0ull % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Child stream derived from the root seed and a tag; independent of how
    // many values have been drawn from this generator.
    Rng split(std::uint64_t stream_tag) const {
        return Rng(mix(seed_ ^ mix(stream_tag + 0x517cc1b727220a95ull)));
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

// Stable tag for named streams (FNV-1a).
inline std::uint64_t stream_tag(const char* name) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char* p = name; *p; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace toalign
