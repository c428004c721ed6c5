#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sourceswap {

/// Seeded generator whose output is identical on every conforming platform.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// The distribution helpers below are written out by hand because the
/// standard library's distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Unbiased integer in [0, bound). Raw draws below 2^64 mod bound are
    /// rejected, the rest reduced modulo bound. bound must be positive.
    std::uint64_t uniform_below(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal draw (Box-Muller, second value cached).
    double normal();

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Per-entry seed derived from a run seed and an entry id.
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view id);

}  // namespace sourceswap
