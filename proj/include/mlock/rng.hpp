#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace mlock {

/// Seeded random source. Every random decision in the toolkit flows through
/// one of these; nothing reads wall-clock time or OS entropy.
///
/// Bounded draws use rejection sampling on raw 64-bit output instead of the
/// std distributions, whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Counter-based derivation: an independent stream for (seed, stream, index).
    /// Used where draws must not depend on evaluation order.
    static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
        std::uint64_t s = mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL));
        s = mix(s ^ mix(index + 0xD1B54A32D192ED03ULL));
        return Rng(s);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace mlock
