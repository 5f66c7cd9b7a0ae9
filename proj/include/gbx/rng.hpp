#pragma once

#include <cstdint>
#include <initializer_list>

namespace gbx {

// splitmix64 finalizer. All randomness in the project flows through this
// mixer so that runs are bit-reproducible across platforms and compilers
// (std::uniform_*_distribution output is implementation-defined).
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a list of identifying parts
// (base seed, purpose tag, iteration, benchmark id, ...). Order-sensitive.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x8557D1C3C2DB0F5BULL;
    for (std::uint64_t p : parts) {
        h = mix64(h ^ p);
    }
    return h;
}

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double next_range(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Uniform in [-1, 1).
    double next_signed_unit() {
        return 2.0 * next_unit() - 1.0;
    }

    // Uniform in [0, n). Lemire multiply-shift; bias < n / 2^64.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

private:
    std::uint64_t state_;
};

// Stateless per-step value, used by the drift random walk so that advancing
// the clock by N check-ins is independent of how the N steps are batched.
inline double hash_signed_unit(std::uint64_t a, std::uint64_t b,
                               std::uint64_t c, std::uint64_t d) {
    std::uint64_t h = derive_seed({a, b, c, d});
    return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

} // namespace gbx
