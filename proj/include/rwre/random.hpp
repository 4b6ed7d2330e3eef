#pragma once

// Keyed pseudorandom streams.
//
// Two kinds of randomness are used throughout:
//   * counter-based draws, where the value for (key, index) is a pure function
//     of its inputs (environment sites, replica seeds);
//   * sequential engines for trajectories, seeded from a derived key.

#include <concepts>
#include <cstdint>
#include <limits>
#include <string_view>

namespace rwre {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a over a tag string; turns stream names into 64-bit domain separators.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t mix_in(std::uint64_t key, std::uint64_t word) noexcept {
    return splitmix64(key ^ splitmix64(word + 0x632be59bd9b4e019ULL));
}

/// Derives a child key from a parent key and any number of integer words.
template <std::integral... Words>
constexpr std::uint64_t derive_key(std::uint64_t key, Words... words) noexcept {
    ((key = mix_in(key, static_cast<std::uint64_t>(words))), ...);
    return key;
}

template <std::integral... Words>
constexpr std::uint64_t derive_key(std::uint64_t key, std::string_view tag, Words... words) noexcept {
    return derive_key(mix_in(key, tag_hash(tag)), words...);
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based draw: uniform in [0, 1) as a pure function of (key, index).
constexpr double keyed_uniform(std::uint64_t key, std::int64_t index) noexcept {
    return to_unit(mix_in(key, static_cast<std::uint64_t>(index)));
}

/// xoshiro256** engine. Satisfies std::uniform_random_bit_generator, so it plugs
/// into <random> distributions.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t x = seed;
        for (auto& w : s_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    double uniform() noexcept { return to_unit((*this)()); }

    friend bool operator==(const Xoshiro256&, const Xoshiro256&) = default;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
};

}  // namespace rwre
