#pragma once

#include <cstdint>
#include <random>

namespace rs2 {

// Deterministic RNG built on the standardized mt19937_64 output stream.
// std:: distributions are implementation-defined, so the mappings to
// uniform reals and bounded ints live here and nowhere else.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return eng_() % n; }

    bool coin() { return (eng_() & 1u) != 0; }

    // Derives an independent stream; used for per-sample seeds.
    std::uint64_t fork_seed() {
        return eng_() ^ 0x9e3779b97f4a7c15ull;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace rs2
