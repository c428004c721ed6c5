#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "sourceswap/lattice.hpp"

namespace sourceswap {

/// Image <-> latent mapping. The real VAE lives behind the bridge; the
/// built-in codecs keep everything else testable on a desk.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual LatentGrid encode(const Image& image) = 0;
    virtual Image decode(const LatentGrid& latent) = 0;
    virtual std::string id() const = 0;
    /// Spatial downsample factor between pixels and latents.
    virtual std::size_t scale() const = 0;
    virtual std::size_t channels() const = 0;
};

/// Pixels are the latents (C = 3, scale 1). Lossless.
class IdentityCodec final : public LatentCodec {
public:
    LatentGrid encode(const Image& image) override;
    Image decode(const LatentGrid& latent) override;
    std::string id() const override { return "identity"; }
    std::size_t scale() const override { return 1; }
    std::size_t channels() const override { return 3; }
};

/// Area-average down by `factor`, nearest-neighbour back up.
class AvgPoolCodec final : public LatentCodec {
public:
    explicit AvgPoolCodec(std::size_t factor = 4);
    LatentGrid encode(const Image& image) override;
    Image decode(const LatentGrid& latent) override;
    std::string id() const override { return "avgpool-" + std::to_string(factor_); }
    std::size_t scale() const override { return factor_; }
    std::size_t channels() const override { return 3; }

private:
    std::size_t factor_;
};

/// "identity" or "avgpool-4" (any "avgpool-N").
std::unique_ptr<LatentCodec> make_builtin_codec(std::string_view id);

}  // namespace sourceswap
