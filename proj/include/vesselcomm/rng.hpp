//! \file vesselcomm/rng.hpp
//! Counter-based random streams.
//!
//! Every random decision in the simulator draws from a stream identified by
//! (seed, entity id, step index, purpose). A stream depends only on that key,
//! never on which thread evaluates it or in which order, which is what makes
//! deterministic mode independent of the thread count.
#pragma once

#include <cstdint>
#include <limits>

namespace vesselcomm {

inline constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v)
{
    return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

//! Purposes separate the independent streams a single entity uses per step.
enum class StreamPurpose : std::uint64_t
{
    brownian = 1,
    assimilation = 2,
    release = 3,
    placement = 4,
    mobile_capture = 5,
    population = 6,
};

/*!
 * SplitMix64 sequence seeded from a stream key. Satisfies
 * UniformRandomBitGenerator so it plugs into <random> distributions.
 */
class StreamRng
{
  public:
    using result_type = std::uint64_t;

    explicit constexpr StreamRng(std::uint64_t state) : state_(state) {}

    StreamRng(std::uint64_t seed, std::uint64_t entity, std::uint64_t step,
              StreamPurpose purpose)
        : state_(hash_combine(
            hash_combine(hash_combine(seed, entity), step),
            static_cast<std::uint64_t>(purpose)))
    {
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max()
    {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()()
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    //! Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() { return ((*this)() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_;
};

//! Seed of replicate k within a seed family.
inline constexpr std::uint64_t replicate_seed(std::uint64_t seed,
                                              std::uint64_t replicate)
{
    return replicate == 0 ? seed : hash_combine(seed, 0xA5A5ULL + replicate);
}

}  // namespace vesselcomm
