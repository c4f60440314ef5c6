// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace driverl {

// splitmix64; used to derive independent stream seeds from (seed, tag...) tuples.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
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

inline std::uint64_t mix_seed(std::uint64_t a) {
    std::uint64_t s = a;
    return splitmix64(s);
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
    std::uint64_t s = a;
    std::uint64_t h = splitmix64(s) ^ (b + 0x9e3779b97f4a7c15ULL);
    if constexpr (sizeof...(rest) == 0) {
        return mix_seed(h);
    } else {
        return mix_seed(h, rest...);
    }
}

// Deterministic RNG. mt19937_64's output sequence is pinned by the standard;
// the distributions below are hand-rolled because std:: distribution output
// is implementation-defined and would break cross-platform reproducibility.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in [-scale, +scale].
    double uniform_symmetric(double scale) { return (2.0 * uniform() - 1.0) * scale; }

    // Uniform index in [0, n); n must be positive.
    std::size_t uniform_index(std::size_t n) {
        // Modulo bias is negligible for n << 2^64 and irrelevant for determinism.
        return static_cast<std::size_t>(eng_() % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = uniform_index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

   private:
    std::mt19937_64 eng_;
};

}  // namespace driverl
