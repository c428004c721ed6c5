#include "sourceswap/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sourceswap/rng.hpp"

namespace sourceswap {

bool PermutationSpec::is_bijection() const {
    std::vector<bool> seen(indices.size(), false);
    for (std::size_t v : indices) {
        if (v >= indices.size() || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

bool PermutationSpec::is_identity() const {
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] != k) return false;
    }
    return true;
}

PermutationSpec make_permutation(std::uint64_t seed, std::size_t n) {
    PermutationSpec spec = identity_permutation(n);
    spec.seed = seed;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
        std::swap(spec.indices[i - 1], spec.indices[j]);
    }
    return spec;
}

PermutationSpec identity_permutation(std::size_t n) {
    PermutationSpec spec;
    spec.indices.resize(n);
    std::iota(spec.indices.begin(), spec.indices.end(), std::size_t{0});
    return spec;
}

std::string_view to_string(PerturbMode mode) {
    switch (mode) {
        case PerturbMode::HighOnly: return "high-only";
        case PerturbMode::LowOnly: return "low-only";
        case PerturbMode::AllComponents: return "all-components";
        case PerturbMode::ResampleGaussian: return "resample-gaussian";
    }
    return "unknown";
}

PerturbMode parse_perturb_mode(std::string_view text) {
    std::string s(text);
    std::replace(s.begin(), s.end(), '_', '-');
    if (s == "high-only" || s == "high") return PerturbMode::HighOnly;
    if (s == "low-only" || s == "low") return PerturbMode::LowOnly;
    if (s == "all-components" || s == "all") return PerturbMode::AllComponents;
    if (s == "resample-gaussian" || s == "resample") return PerturbMode::ResampleGaussian;
    throw InvalidArgument("unknown perturbation mode '" + std::string(text) + "'");
}

FrequencySplit split_frequency(const LatentGrid& z, const LowPassFilter& lpf) {
    if (lpf.height() != z.height() || lpf.width() != z.width()) {
        throw ShapeMismatch("split_frequency: filter is " + std::to_string(lpf.height()) + "x" +
                            std::to_string(lpf.width()) + " but grid is " +
                            std::to_string(z.height()) + "x" + std::to_string(z.width()));
    }
    const FrequencyGrid spectrum = fft2(z);
    return {ifft2(hadamard(spectrum, lpf.weights())), ifft2(hadamard(spectrum, lpf.high_pass()))};
}

namespace {

void require_mask_matches(const LatentGrid& grid, const BinaryMask& mask, const char* where) {
    if (mask.height() != grid.height() || mask.width() != grid.width()) {
        throw ShapeMismatch(std::string(where) + ": mask is " + std::to_string(mask.height()) +
                            "x" + std::to_string(mask.width()) + " but grid is " +
                            std::to_string(grid.height()) + "x" + std::to_string(grid.width()));
    }
}

LatentGrid masked(const LatentGrid& grid, const BinaryMask& mask) {
    LatentGrid out(grid.channels(), grid.height(), grid.width());
    for (std::size_t c = 0; c < grid.channels(); ++c) {
        const auto src = grid.plane(c);
        auto dst = out.plane(c);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = mask.test(i) ? src[i] : 0.0;
    }
    return out;
}

struct Recombined {
    LatentGrid value;
    double disagreement;
};

Recombined recombine_both_paths(const LatentGrid& permuted, const LatentGrid& kept,
                                const LatentGrid& original, const BinaryMask& mask) {
    if (!permuted.same_shape(kept) || !permuted.same_shape(original)) {
        throw ShapeMismatch("recombine: component shapes differ");
    }
    require_mask_matches(original, mask, "recombine");

    FrequencyGrid spectrum = fft2(permuted);
    spectrum += fft2(masked(kept, mask));
    LatentGrid value = ifft2(spectrum);

    double disagreement = 0.0;
    for (std::size_t c = 0; c < value.channels(); ++c) {
        auto out = value.plane(c);
        const auto p = permuted.plane(c);
        const auto k = kept.plane(c);
        const auto o = original.plane(c);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const bool in = mask.test(i);
            const double spatial = in ? p[i] + k[i] : o[i];
            if (!in) out[i] += o[i];
            disagreement = std::max(disagreement, std::abs(out[i] - spatial));
        }
    }
    if (disagreement > kRecombineTolerance) {
        throw Error("recombine: frequency and spatial paths disagree by " +
                    std::to_string(disagreement));
    }
    return {std::move(value), disagreement};
}

}  // namespace

LatentGrid permute_masked(const LatentGrid& component, const BinaryMask& mask,
                          const PermutationSpec& spec) {
    require_mask_matches(component, mask, "permute_masked");
    const auto positions = mask.set_indices();
    if (spec.size() != positions.size()) {
        throw InvalidArgument("permute_masked: permutation has " + std::to_string(spec.size()) +
                              " entries but mask has " + std::to_string(positions.size()) +
                              " set pixels");
    }
    if (!spec.is_bijection()) throw InvalidArgument("permute_masked: indices are not a bijection");

    LatentGrid out(component.channels(), component.height(), component.width());
    for (std::size_t c = 0; c < component.channels(); ++c) {
        const auto src = component.plane(c);
        auto dst = out.plane(c);
        for (std::size_t k = 0; k < positions.size(); ++k) {
            dst[positions[k]] = src[positions[spec.indices[k]]];
        }
    }
    return out;
}

LatentGrid recombine(const LatentGrid& permuted, const LatentGrid& kept, const LatentGrid& original,
                     const BinaryMask& mask) {
    return recombine_both_paths(permuted, kept, original, mask).value;
}

PerturbOutcome perturb_with_permutation(const LatentGrid& z_T, const BinaryMask& mask,
                                        PerturbMode mode, const PermutationSpec& spec,
                                        double stop_frequency) {
    require_finite(z_T, "perturb_initial_noise");
    require_mask_matches(z_T, mask, "perturb_initial_noise");
    if (mask.is_empty()) throw InvalidArgument("perturb_initial_noise: mask is empty");
    // Validated up front so every mode rejects a bad stop frequency.
    const LowPassFilter lpf = make_lpf(z_T.height(), z_T.width(), stop_frequency);

    PerturbOutcome outcome;
    outcome.permutation = spec;

    switch (mode) {
        case PerturbMode::HighOnly:
        case PerturbMode::LowOnly: {
            FrequencySplit split = split_frequency(z_T, lpf);
            const bool high = mode == PerturbMode::HighOnly;
            const LatentGrid& moving = high ? split.high : split.low;
            const LatentGrid& kept = high ? split.low : split.high;
            LatentGrid after = permute_masked(moving, mask, spec);
            Recombined merged = recombine_both_paths(after, kept, z_T, mask);
            outcome.perturbed = std::move(merged.value);
            outcome.path_disagreement = merged.disagreement;
            outcome.component_before = masked(moving, mask);
            outcome.component_after = std::move(after);
            break;
        }
        case PerturbMode::AllComponents: {
            LatentGrid after = permute_masked(z_T, mask, spec);
            LatentGrid out = z_T;
            for (std::size_t c = 0; c < out.channels(); ++c) {
                auto dst = out.plane(c);
                const auto src = after.plane(c);
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    if (mask.test(i)) dst[i] = src[i];
                }
            }
            outcome.perturbed = std::move(out);
            outcome.component_before = masked(z_T, mask);
            outcome.component_after = std::move(after);
            break;
        }
        case PerturbMode::ResampleGaussian: {
            Rng rng(spec.seed);
            LatentGrid out = z_T;
            const auto positions = mask.set_indices();
            for (std::size_t c = 0; c < out.channels(); ++c) {
                auto dst = out.plane(c);
                for (std::size_t idx : positions) dst[idx] = rng.normal();
            }
            outcome.perturbed = std::move(out);
            break;
        }
    }
    return outcome;
}

PerturbOutcome perturb_initial_noise_detailed(const LatentGrid& z_T, const BinaryMask& mask,
                                              const PerturbParams& params) {
    require_mask_matches(z_T, mask, "perturb_initial_noise");
    PermutationSpec spec = params.mode == PerturbMode::ResampleGaussian
                               ? PermutationSpec{params.seed, {}}
                               : make_permutation(params.seed, mask.popcount());
    return perturb_with_permutation(z_T, mask, params.mode, spec, params.stop_frequency);
}

LatentGrid perturb_initial_noise(const LatentGrid& z_T, const BinaryMask& mask,
                                 const PerturbParams& params) {
    return perturb_initial_noise_detailed(z_T, mask, params).perturbed;
}

}  // namespace sourceswap
