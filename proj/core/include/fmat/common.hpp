#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fmat {

// Deterministic RNG wrapper. Doubles are derived from the raw 64-bit stream
// explicitly so that sequences are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive. Rejection-free modulo is fine here:
    // ranges are tiny compared to 2^64 and bias is irrelevant for test data.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<std::int64_t>(gen_() % span);
    }

private:
    std::mt19937_64 gen_;
};

} // namespace fmat
