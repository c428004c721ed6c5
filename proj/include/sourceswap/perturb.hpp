#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sourceswap/lattice.hpp"
#include "sourceswap/maskops.hpp"

namespace sourceswap {

/// Bijection over the N set pixels of a mask, taken in row-major order.
/// indices[k] is the source slot whose value lands in slot k.
struct PermutationSpec {
    std::uint64_t seed = 0;
    std::vector<std::size_t> indices;

    std::size_t size() const noexcept { return indices.size(); }
    bool is_bijection() const;
    bool is_identity() const;
};

/// Fisher-Yates shuffle driven by Rng(seed).
PermutationSpec make_permutation(std::uint64_t seed, std::size_t n);
PermutationSpec identity_permutation(std::size_t n);

enum class PerturbMode {
    HighOnly,          ///< permute the high band inside the mask (default)
    LowOnly,           ///< permute the low band, keep the high band
    AllComponents,     ///< permute raw values in the spatial domain
    ResampleGaussian,  ///< replace in-mask values with fresh N(0, 1) draws
};

std::string_view to_string(PerturbMode mode);
/// Accepts "high-only", "low-only", "all", "all-components", "resample-gaussian";
/// underscores are treated like dashes.
PerturbMode parse_perturb_mode(std::string_view text);

struct FrequencySplit {
    LatentGrid low;
    LatentGrid high;
};

FrequencySplit split_frequency(const LatentGrid& z, const LowPassFilter& lpf);

/// Applies one spatial permutation to every channel of the masked component
/// and zeroes everything outside the mask.
LatentGrid permute_masked(const LatentGrid& component, const BinaryMask& mask,
                          const PermutationSpec& spec);

/// Merges a permuted in-mask component with the masked complementary band and
/// the untouched background:
///   IFFT(FFT(permuted) + FFT(M * kept)) + (1 - M) * original.
/// The spatial-domain sum is evaluated as well and must agree within
/// kRecombineTolerance; otherwise an Error is thrown.
LatentGrid recombine(const LatentGrid& permuted, const LatentGrid& kept, const LatentGrid& original,
                     const BinaryMask& mask);

inline constexpr double kRecombineTolerance = 1e-8;

struct PerturbParams {
    PerturbMode mode = PerturbMode::HighOnly;
    std::uint64_t seed = 0;
    double stop_frequency = kDefaultStopFrequency;
};

/// Everything produced along the way, for provenance and checks.
struct PerturbOutcome {
    LatentGrid perturbed;
    /// The component that was shuffled, restricted to the mask (zero outside).
    /// Empty for ResampleGaussian.
    std::optional<LatentGrid> component_before;
    std::optional<LatentGrid> component_after;
    PermutationSpec permutation;
    /// Max abs difference between the frequency-domain and spatial-domain
    /// recombinations (0 for the purely spatial modes).
    double path_disagreement = 0.0;
};

PerturbOutcome perturb_initial_noise_detailed(const LatentGrid& z_T, const BinaryMask& mask,
                                              const PerturbParams& params);

/// Same as above with an explicit permutation instead of one drawn from the seed.
PerturbOutcome perturb_with_permutation(const LatentGrid& z_T, const BinaryMask& mask,
                                        PerturbMode mode, const PermutationSpec& spec,
                                        double stop_frequency = kDefaultStopFrequency);

LatentGrid perturb_initial_noise(const LatentGrid& z_T, const BinaryMask& mask,
                                 const PerturbParams& params);

}  // namespace sourceswap
