#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wsiseg {

/// Seeded random stream. Every stochastic operation takes one explicitly so
/// that results depend only on how streams are derived, never on scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [lo, hi); returns lo when the range is empty.
    double uniform(double lo = 0.0, double hi = 1.0) {
        if (!(hi > lo)) return lo;
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    /// Uniform integer in [lo, hi] (inclusive).
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

    bool coin(double p = 0.5) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finaliser; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

/// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Per-patch stream seed from (global seed, slide, lattice position, epoch).
constexpr std::uint64_t patch_seed(std::uint64_t global_seed, std::string_view slide_id, int grid_x, int grid_y,
                                   int epoch = 0) {
    std::uint64_t s = combine_seed(global_seed, stable_hash(slide_id));
    s = combine_seed(s, static_cast<std::uint32_t>(grid_x));
    s = combine_seed(s, static_cast<std::uint32_t>(grid_y));
    return combine_seed(s, static_cast<std::uint32_t>(epoch));
}

}  // namespace wsiseg
