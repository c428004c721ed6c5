#include "sourceswap/codec.hpp"

#include <charconv>

namespace sourceswap {

namespace {

void require_rgb(const Image& image, const char* who) {
    if (image.channels() != 3) {
        throw ShapeMismatch(std::string(who) + ": expected a 3-channel image, got " +
                            std::to_string(image.channels()));
    }
}

}  // namespace

LatentGrid IdentityCodec::encode(const Image& image) {
    require_rgb(image, "identity codec");
    return {image.channels(), image.height(), image.width(), image.data()};
}

Image IdentityCodec::decode(const LatentGrid& latent) {
    return {latent.channels(), latent.height(), latent.width(), latent.data()};
}

AvgPoolCodec::AvgPoolCodec(std::size_t factor) : factor_(factor) {
    if (factor == 0) throw InvalidArgument("avgpool factor must be positive");
}

LatentGrid AvgPoolCodec::encode(const Image& image) {
    require_rgb(image, "avgpool codec");
    if (image.height() % factor_ != 0 || image.width() % factor_ != 0) {
        throw ShapeMismatch("avgpool codec: image " + std::to_string(image.height()) + "x" +
                            std::to_string(image.width()) + " is not divisible by " +
                            std::to_string(factor_));
    }
    const std::size_t h = image.height() / factor_;
    const std::size_t w = image.width() / factor_;
    const double norm = 1.0 / static_cast<double>(factor_ * factor_);
    LatentGrid out(image.channels(), h, w);
    for (std::size_t c = 0; c < image.channels(); ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double sum = 0.0;
                for (std::size_t dy = 0; dy < factor_; ++dy) {
                    for (std::size_t dx = 0; dx < factor_; ++dx) {
                        sum += image.at(c, y * factor_ + dy, x * factor_ + dx);
                    }
                }
                out.at(c, y, x) = sum * norm;
            }
        }
    }
    return out;
}

Image AvgPoolCodec::decode(const LatentGrid& latent) {
    Image out(latent.channels(), latent.height() * factor_, latent.width() * factor_);
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            for (std::size_t x = 0; x < out.width(); ++x) {
                out.at(c, y, x) = latent.at(c, y / factor_, x / factor_);
            }
        }
    }
    return out;
}

std::unique_ptr<LatentCodec> make_builtin_codec(std::string_view id) {
    if (id == "identity") return std::make_unique<IdentityCodec>();
    constexpr std::string_view prefix = "avgpool-";
    if (id.starts_with(prefix)) {
        std::size_t factor = 0;
        const auto digits = id.substr(prefix.size());
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), factor);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && factor > 0) {
            return std::make_unique<AvgPoolCodec>(factor);
        }
    }
    throw InvalidArgument("unknown codec '" + std::string(id) + "'");
}

}  // namespace sourceswap
