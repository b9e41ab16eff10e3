#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>

namespace medsynth {

// Seeded generator with distribution code that does not depend on the
// standard library implementation, so streams are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal();

    // Bernoulli(p).
    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n), unbiased.
    std::size_t uniform_index(std::size_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    // Engine state as text; round-trips through restore().
    std::string state() const;
    void restore(const std::string& state);

private:
    std::mt19937_64 engine_;
};

// Independent seed for a numbered sub-stream (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace medsynth
