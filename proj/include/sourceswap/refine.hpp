#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "sourceswap/codec.hpp"
#include "sourceswap/ddim.hpp"
#include "sourceswap/maskops.hpp"

namespace sourceswap {

inline constexpr std::size_t kDefaultRefineRounds = 2;

/// One application of the swapping model: put the reference object into the
/// masked area of the source.
class SwapOperator {
public:
    virtual ~SwapOperator() = default;
    virtual Image apply(const Image& reference, const Image& source, const BinaryMask& mask) = 0;
    virtual std::string id() const = 0;

    /// Operators that can work on latents directly let the driver skip the
    /// decode/encode between rounds.
    virtual bool supports_latent() const { return false; }
    virtual LatentGrid apply_latent(const Image& reference, const LatentGrid& source,
                                    const BinaryMask& mask);
    virtual LatentGrid encode(const Image& image);
    virtual Image decode(const LatentGrid& latent);
};

/// Returns the source unchanged.
class IdentitySwap final : public SwapOperator {
public:
    Image apply(const Image&, const Image& source, const BinaryMask&) override { return source; }
    std::string id() const override { return "identity"; }
};

/// Encode, invert, sample back with the reference-free denoiser, decode.
/// Stands in for the trained model when no bridge is configured.
class DiffusionSwap final : public SwapOperator {
public:
    DiffusionSwap(std::shared_ptr<LatentCodec> codec, std::shared_ptr<Denoiser> denoiser,
                  NoiseSchedule schedule, ConditioningRef cond = {});

    Image apply(const Image& reference, const Image& source, const BinaryMask& mask) override;
    std::string id() const override { return "diffusion:" + codec_->id() + "+" + denoiser_->id(); }

    bool supports_latent() const override { return true; }
    LatentGrid apply_latent(const Image& reference, const LatentGrid& source,
                            const BinaryMask& mask) override;
    LatentGrid encode(const Image& image) override { return codec_->encode(image); }
    Image decode(const LatentGrid& latent) override { return codec_->decode(latent); }

private:
    std::shared_ptr<LatentCodec> codec_;
    std::shared_ptr<Denoiser> denoiser_;
    NoiseSchedule schedule_;
    ConditioningRef cond_;
};

struct RefineOptions {
    std::size_t rounds = kDefaultRefineRounds;
    bool keep_intermediates = true;
    /// Chain latents between rounds when the operator supports it.
    bool latent_chaining = false;
};

struct RefineResult {
    Image output;
    std::vector<Image> intermediates;  ///< output of every round when kept
    std::vector<double> round_seconds;
};

/// The operator failed in some round. Carries the last good image, which is
/// the source itself when round 1 fails.
class RefineFailure : public Error {
public:
    RefineFailure(std::size_t round, Image last_good, const std::string& what)
        : Error("refinement failed in round " + std::to_string(round) + ": " + what),
          round_(round),
          last_good_(std::move(last_good)) {}
    std::size_t round() const noexcept { return round_; }
    const Image& last_good() const noexcept { return last_good_; }

private:
    std::size_t round_;
    Image last_good_;
};

/// Applies `op` `rounds` times, feeding each output back in as the source.
/// The mask stays fixed across rounds.
RefineResult refine(SwapOperator& op, const Image& reference, const Image& source,
                    const BinaryMask& mask, const RefineOptions& options = {});

}  // namespace sourceswap
