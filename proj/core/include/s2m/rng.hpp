#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace s2m {

/// Seeded generator with platform-independent draws. Standard library
/// distributions are implementation-defined, so conversions are done here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    double normal();

    std::mt19937_64& engine() { return engine_; }

    /// Full generator state as text; set_state(state()) resumes the same stream.
    std::string state() const;
    void set_state(const std::string& text);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace s2m
