#pragma once

#include <cstdint>
#include <random>

namespace vbs {

// Deterministic draw source: identical seed gives an identical sequence on
// the same build. Distributions are hand-rolled on top of the raw engine so
// the sequence does not depend on the standard library's implementation.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    // Standard normal via Box-Muller.
    double normal();
    // Normal(0, stddev) resampled until within 2 standard deviations.
    double trunc_normal(double stddev);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vbs
