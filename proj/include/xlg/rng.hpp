#pragma once

// Deterministic random streams. Every random draw in the engine comes from an
// Rng derived from (seed, stream name), so two consumers never share state and
// results do not depend on the standard library's distribution implementations.

#include <cstdint>
#include <random>
#include <string_view>

namespace xlg {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    /// Independent stream keyed by name, e.g. Rng::stream(seed, "probe/split/seed0").
    static Rng stream(std::uint64_t seed, std::string_view name) {
        return Rng(seed ^ splitmix64(fnv1a64(name)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via Box-Muller; caches the second variate.
    double normal();

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            using std::swap;
            swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace xlg
