#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace psforge {

// splitmix64 finalizer; the basis of every random stream in the library.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t a) { return mix64(seed ^ mix64(a)); }
inline uint64_t hash_combine(uint64_t seed, uint64_t a, uint64_t b) {
    return hash_combine(hash_combine(seed, a), b);
}
inline uint64_t hash_combine(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    return hash_combine(hash_combine(seed, a, b), c);
}

// Small sequential generator. Results do not depend on the standard library,
// so seeded runs are reproducible across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x5851f42d4c957f2dULL)) {}

    uint64_t next_u64() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        uint64_t x = state_;
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        return x;
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t index(uint64_t n) { return next_u64() % n; }

    double normal() {
        // Box-Muller; one value per call, no cached spare.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Deterministic partial Fisher-Yates: the first k entries of a random
    // permutation of [0, n).
    std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k) {
        std::vector<uint32_t> idx(n);
        for (uint32_t i = 0; i < n; ++i) idx[i] = i;
        if (k > n) k = n;
        for (uint32_t i = 0; i < k; ++i) {
            const uint32_t j = i + uint32_t(index(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = size_t(index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace psforge
