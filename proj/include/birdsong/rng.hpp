#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace birdsong {

/// Deterministic 64-bit generator (splitmix64). Chosen over std::mt19937 so
/// that streams are reproducible independent of the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // modulo bias is < 2^-40 for the ranges used here
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller (pair cached).
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 1e-300);
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// All randomness in the pipeline flows from one top-level seed through this
/// derivation: child = mix(parent, fnv1a(tag), indices...). Same derivation
/// path, same stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    return hash_mix(base, fnv1a(tag));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a) {
    return hash_mix(derive_seed(base, tag), a);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a,
                                 std::uint64_t b) {
    return hash_mix(hash_mix(derive_seed(base, tag), a), b);
}

}  // namespace birdsong
