#pragma once

// Counter-based random streams. Every Monte-Carlo draw derives its generator
// from (seed, stream, index) so results never depend on evaluation order.

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace latresp {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, used to turn sub-stream names ("train", "mc", "data") into ids.
inline constexpr std::uint64_t stream_id(std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// SplitMix64 generator; satisfies UniformRandomBitGenerator.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t state = 0) noexcept : state_(state) {}

    /// Generator for draw `index` of stream `stream` under `seed`.
    static Rng at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) noexcept {
        return Rng(mix_key(mix_key(seed, stream), index));
    }
    static Rng at(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) noexcept {
        return at(seed, stream_id(stream), index);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Child generator keyed on a draw index; leaves this generator untouched.
    Rng fork(std::uint64_t index) const noexcept { return Rng(mix_key(state_, index)); }

    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n) noexcept { return static_cast<std::size_t>((*this)() % n); }

    double normal() {
        std::normal_distribution<double> dist(0.0, 1.0);
        return dist(*this);
    }

    std::vector<double> normal_vector(std::size_t n) {
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<double> out(n);
        for (auto& v : out) v = dist(*this);
        return out;
    }

    std::uint64_t state() const noexcept { return state_; }

  private:
    std::uint64_t state_;
};

}  // namespace latresp
