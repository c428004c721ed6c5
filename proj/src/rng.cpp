#include "sourceswap/rng.hpp"

#include <cmath>
#include <numbers>

#include "sourceswap/error.hpp"

namespace sourceswap {

std::uint64_t Rng::uniform_below(std::uint64_t bound) {
    if (bound == 0) throw InvalidArgument("uniform_below: bound must be positive");
    // Reject the low 2^64 mod bound values so every residue is equally likely.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= threshold) return x % bound;
    }
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform01();
    } while (u1 == 0.0);
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view id) {
    // FNV-1a over the id, then mixed with the run seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : id) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(run_seed ^ splitmix64(h));
}

}  // namespace sourceswap
