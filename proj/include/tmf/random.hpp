/// @file random.hpp Counter-based random streams.
///
/// Every random draw in a run comes from a stream keyed by
/// (scenario seed, purpose, step, agent, particle). The key is folded through
/// the SplitMix64 finalizer one field at a time:
///
///     h = mix(seed ^ purpose_tag)
///     h = mix(h ^ step); h = mix(h ^ agent); h = mix(h ^ particle)
///
/// and the resulting 64-bit value seeds a SplitMix64 generator. Streams are
/// therefore independent of scheduling order and of the number of threads.

#ifndef TMF_RANDOM_HPP
#define TMF_RANDOM_HPP

#include <cstdint>
#include <limits>
#include <random>

#include "types.hpp"

namespace tmf {

enum class Purpose : std::uint64_t {
    init = 0x494e4954ULL,
    forecast = 0x46435354ULL,
    predicted_obs = 0x50524544ULL,
    truth_process = 0x54525550ULL,
    truth_obs = 0x5452554fULL,
};

[[nodiscard]] constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

[[nodiscard]] constexpr std::uint64_t stream_key(std::uint64_t seed, Purpose purpose, std::uint64_t step,
                                                 std::uint64_t agent, std::uint64_t particle) noexcept {
    std::uint64_t h = splitmix64_mix(seed ^ static_cast<std::uint64_t>(purpose));
    h = splitmix64_mix(h ^ step);
    h = splitmix64_mix(h ^ agent);
    return splitmix64_mix(h ^ particle);
}

/// SplitMix64 as a UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31U);
    }

private:
    std::uint64_t state_;
};

/// A stream of standard normal draws.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t key) : engine_(key) {}

    NormalStream(std::uint64_t seed, Purpose purpose, std::uint64_t step, std::uint64_t agent,
                 std::uint64_t particle)
        : engine_(stream_key(seed, purpose, step, agent, particle)) {}

    double operator()() { return dist_(engine_); }

    Vector vector(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) {
            v[i] = dist_(engine_);
        }
        return v;
    }

private:
    SplitMix64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

} // namespace tmf

#endif // TMF_RANDOM_HPP
