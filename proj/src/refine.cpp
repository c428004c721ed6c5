#include "sourceswap/refine.hpp"

#include <chrono>

namespace sourceswap {

LatentGrid SwapOperator::apply_latent(const Image&, const LatentGrid&, const BinaryMask&) {
    throw Error(id() + " does not operate on latents");
}

LatentGrid SwapOperator::encode(const Image&) {
    throw Error(id() + " does not operate on latents");
}

Image SwapOperator::decode(const LatentGrid&) {
    throw Error(id() + " does not operate on latents");
}

DiffusionSwap::DiffusionSwap(std::shared_ptr<LatentCodec> codec, std::shared_ptr<Denoiser> denoiser,
                             NoiseSchedule schedule, ConditioningRef cond)
    : codec_(std::move(codec)), denoiser_(std::move(denoiser)), schedule_(std::move(schedule)), cond_(cond) {
    if (!codec_ || !denoiser_) throw InvalidArgument("DiffusionSwap needs a codec and a denoiser");
}

LatentGrid DiffusionSwap::apply_latent(const Image&, const LatentGrid& source, const BinaryMask&) {
    Trajectory traj = ddim_invert(source, *denoiser_, schedule_, cond_);
    return ddim_sample(traj.back(), *denoiser_, schedule_, cond_);
}

Image DiffusionSwap::apply(const Image& reference, const Image& source, const BinaryMask& mask) {
    return codec_->decode(apply_latent(reference, codec_->encode(source), mask));
}

RefineResult refine(SwapOperator& op, const Image& reference, const Image& source,
                    const BinaryMask& mask, const RefineOptions& options) {
    if (options.rounds == 0) throw InvalidArgument("refine: rounds must be at least 1");
    if (source.height() != mask.height() || source.width() != mask.width()) {
        throw ShapeMismatch("refine: mask and source sizes differ");
    }
    const bool latent = options.latent_chaining && op.supports_latent();

    RefineResult result;
    Image current = source;
    LatentGrid current_latent;
    if (latent) current_latent = op.encode(source);

    for (std::size_t round = 1; round <= options.rounds; ++round) {
        const auto start = std::chrono::steady_clock::now();
        try {
            if (latent) {
                current_latent = op.apply_latent(reference, current_latent, mask);
                current = op.decode(current_latent);
            } else {
                Image next = op.apply(reference, current, mask);
                if (!next.same_shape(source)) {
                    throw ShapeMismatch("operator changed the image dimensions");
                }
                current = std::move(next);
            }
        } catch (const std::exception& e) {
            throw RefineFailure(round, current, e.what());
        }
        result.round_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        if (options.keep_intermediates) result.intermediates.push_back(current);
    }
    result.output = std::move(current);
    return result;
}

}  // namespace sourceswap
