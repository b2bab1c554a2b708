#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace epiworld {

/// SplitMix64 finalizer; used for key derivation and state seeding.
constexpr std::uint64_t splitmix64(std::uint64_t& x) noexcept
{
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) noexcept
{
    std::uint64_t x = a;
    std::uint64_t h = splitmix64(x);
    x = h ^ (b * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
    return splitmix64(x);
}

/// Splittable random stream. The pair (seed, stream_id) fully determines the
/// sequence; child streams are derived by key, never by drawing, so the order
/// in which parallel work consumes streams cannot change results.
///
/// Satisfies UniformRandomBitGenerator, so it plugs into <random>
/// distributions. Functions that consume randomness take an RngStream by
/// value: the caller's copy is never advanced.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
        : seed_(seed), stream_id_(stream_id), key_(mix_keys(seed, stream_id))
    {
        std::uint64_t sm = key_;
        for (auto& word : state_) {
            word = splitmix64(sm);
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::uint64_t key() const noexcept { return key_; }

    /// Independent child stream keyed by `child`. Does not advance this stream.
    RngStream derive(std::uint64_t child) const noexcept { return RngStream(key_, child); }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    // xoshiro256**
    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double normal() { return std::normal_distribution<double>{}(*this); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t state_[4]{};
};

inline RngStream derive_stream(std::uint64_t seed, std::uint64_t stream_id) noexcept
{
    return RngStream(seed, stream_id);
}

} // namespace epiworld
