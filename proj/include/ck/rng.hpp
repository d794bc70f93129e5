#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ck {

// Seeded generator with a platform-independent output mapping.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The std:: distributions are implementation defined, so the
// mappings to [0,1) and to integer ranges are done here:
//   uniform01   = (x >> 11) * 2^-53
//   index(n)    = rejection sampling on the top bits (unbiased)
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    result_type operator()() { return engine_(); }
    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n) {
        if (n <= 1) return 0;
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = max() - (max() % bound + 1) % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x > limit);
        return static_cast<std::size_t>(x % bound);
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to turn stage names into stream tags.
constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// seed = mix64(mix64(mix64(master) ^ id) ^ fnv1a(stage))
//
// Depends only on (master, id, stage), never on processing order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t id,
                                    std::string_view stage) {
    return mix64(mix64(mix64(master) ^ id) ^ fnv1a(stage));
}

} // namespace ck
