#include "sourceswap/augment.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>

#include "sourceswap/rng.hpp"

namespace sourceswap {

std::string_view to_string(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::Blur: return "blur";
        case AugmentKind::ZoomIn: return "zoom-in";
        case AugmentKind::ZoomOut: return "zoom-out";
        case AugmentKind::Perspective: return "perspective";
        case AugmentKind::Elastic: return "elastic";
    }
    return "unknown";
}

std::vector<AugmentOp> parse_augment_list(std::string_view text) {
    std::vector<AugmentOp> ops;
    while (!text.empty()) {
        const auto comma = text.find(',');
        std::string_view item = text.substr(0, comma);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (item.empty()) continue;

        const auto colon = item.find(':');
        const std::string_view name = item.substr(0, colon);
        AugmentOp op{};
        if (name == "blur") op.kind = AugmentKind::Blur;
        else if (name == "zoom-in") op.kind = AugmentKind::ZoomIn;
        else if (name == "zoom-out") op.kind = AugmentKind::ZoomOut;
        else if (name == "perspective") op.kind = AugmentKind::Perspective;
        else if (name == "elastic") op.kind = AugmentKind::Elastic;
        else throw InvalidArgument("unknown augmentation '" + std::string(name) + "'");

        if (colon != std::string_view::npos) {
            const std::string value(item.substr(colon + 1));
            try {
                std::size_t used = 0;
                op.param = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw InvalidArgument("bad parameter for " + std::string(name) + ": '" + value + "'");
            }
        }
        ops.push_back(op);
    }
    return ops;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("blur sigma must be positive");
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

namespace {

// 1D convolution of every row (or column) with edge replication.
void convolve_axis(std::span<const double> src, std::span<double> dst, std::size_t h, std::size_t w,
                   const std::vector<double>& taps, bool along_rows) {
    const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const auto len = static_cast<std::ptrdiff_t>(along_rows ? w : h);
    const std::size_t lines = along_rows ? h : w;
    for (std::size_t line = 0; line < lines; ++line) {
        for (std::ptrdiff_t k = 0; k < len; ++k) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                const auto j = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k + t, 0, len - 1));
                const std::size_t idx = along_rows ? line * w + j : j * w + line;
                acc += taps[static_cast<std::size_t>(t + radius)] * src[idx];
            }
            const std::size_t out = along_rows ? line * w + static_cast<std::size_t>(k)
                                               : static_cast<std::size_t>(k) * w + line;
            dst[out] = acc;
        }
    }
}

double sample_bilinear(const Image& image, std::size_t c, double y, double x) {
    const double fy = std::floor(y);
    const double fx = std::floor(x);
    const double ty = y - fy;
    const double tx = x - fx;
    const auto h = static_cast<std::ptrdiff_t>(image.height());
    const auto w = static_cast<std::ptrdiff_t>(image.width());
    auto px = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) {
        if (yy < 0 || xx < 0 || yy >= h || xx >= w) return 0.0;
        return image.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    };
    const auto y0 = static_cast<std::ptrdiff_t>(fy);
    const auto x0 = static_cast<std::ptrdiff_t>(fx);
    double v = 0.0;
    // Skipping zero-weight taps keeps integer coordinates exact at the border.
    if ((1 - ty) * (1 - tx) != 0.0) v += (1 - ty) * (1 - tx) * px(y0, x0);
    if ((1 - ty) * tx != 0.0) v += (1 - ty) * tx * px(y0, x0 + 1);
    if (ty * (1 - tx) != 0.0) v += ty * (1 - tx) * px(y0 + 1, x0);
    if (ty * tx != 0.0) v += ty * tx * px(y0 + 1, x0 + 1);
    return v;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
    const auto taps = gaussian_kernel(sigma);
    Image tmp(image.channels(), image.height(), image.width());
    Image out(image.channels(), image.height(), image.width());
    for (std::size_t c = 0; c < image.channels(); ++c) {
        convolve_axis(image.plane(c), tmp.plane(c), image.height(), image.width(), taps, true);
        convolve_axis(tmp.plane(c), out.plane(c), image.height(), image.width(), taps, false);
    }
    return out;
}

Image zoom(const Image& image, double scale) {
    if (!(scale > 0.0)) throw InvalidArgument("zoom scale must be positive");
    if (scale == 1.0) return image;
    const double cy = (static_cast<double>(image.height()) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.width()) - 1.0) / 2.0;
    Image out(image.channels(), image.height(), image.width());
    for (std::size_t c = 0; c < image.channels(); ++c) {
        for (std::size_t y = 0; y < image.height(); ++y) {
            for (std::size_t x = 0; x < image.width(); ++x) {
                const double sy = cy + (static_cast<double>(y) - cy) / scale;
                const double sx = cx + (static_cast<double>(x) - cx) / scale;
                out.at(c, y, x) = sample_bilinear(image, c, sy, sx);
            }
        }
    }
    return out;
}

std::optional<std::array<double, 9>> homography_for_quad(const Quad& quad, std::size_t height,
                                                         std::size_t width) {
    const double w = static_cast<double>(width) - 1.0;
    const double h = static_cast<double>(height) - 1.0;
    const std::array<std::array<double, 2>, 4> dst_corners = {{{0, 0}, {w, 0}, {w, h}, {0, h}}};
    // Solve for H (h33 = 1) with H * (x, y, 1) ~ quad corner.
    Eigen::Matrix<double, 8, 8> A;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = dst_corners[i][0];
        const double y = dst_corners[i][1];
        const double u = quad[i][0];
        const double v = quad[i][1];
        A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(A);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Matrix<double, 8, 1> sol = lu.solve(b);
    std::array<double, 9> H{};
    for (int i = 0; i < 8; ++i) H[i] = sol(i);
    H[8] = 1.0;

    Eigen::Matrix3d M;
    M << H[0], H[1], H[2], H[3], H[4], H[5], H[6], H[7], H[8];
    if (!std::isfinite(M.determinant()) || std::abs(M.determinant()) < 1e-12) return std::nullopt;
    // The projective denominator must keep one sign over the frame, otherwise
    // the warp folds through infinity.
    for (const auto& corner : dst_corners) {
        const double denom = H[6] * corner[0] + H[7] * corner[1] + H[8];
        if (!(denom > 1e-9)) return std::nullopt;
    }
    return H;
}

Image perspective_warp(const Image& image, const std::array<double, 9>& H) {
    Image out(image.channels(), image.height(), image.width());
    for (std::size_t y = 0; y < image.height(); ++y) {
        for (std::size_t x = 0; x < image.width(); ++x) {
            const double xd = static_cast<double>(x);
            const double yd = static_cast<double>(y);
            const double denom = H[6] * xd + H[7] * yd + H[8];
            const double sx = (H[0] * xd + H[1] * yd + H[2]) / denom;
            const double sy = (H[3] * xd + H[4] * yd + H[5]) / denom;
            for (std::size_t c = 0; c < image.channels(); ++c) {
                out.at(c, y, x) = sample_bilinear(image, c, sy, sx);
            }
        }
    }
    return out;
}

Image elastic_warp(const Image& image, double alpha, std::uint64_t seed, double smoothing) {
    if (alpha < 0.0) throw InvalidArgument("elastic alpha must be non-negative");
    if (alpha == 0.0) return image;
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    Rng rng(seed);
    Image field(2, h, w);
    for (double& v : field.values()) v = rng.uniform(-1.0, 1.0);
    field = gaussian_blur(field, smoothing);
    double peak = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            peak = std::max(peak, std::hypot(field.at(0, y, x), field.at(1, y, x)));
        }
    }
    const double gain = peak > 0.0 ? alpha / peak : 0.0;
    Image out(image.channels(), h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double sy = static_cast<double>(y) + gain * field.at(0, y, x);
            const double sx = static_cast<double>(x) + gain * field.at(1, y, x);
            for (std::size_t c = 0; c < image.channels(); ++c) {
                out.at(c, y, x) = sample_bilinear(image, c, sy, sx);
            }
        }
    }
    return out;
}

namespace {

Quad jittered_quad(Rng& rng, std::size_t height, std::size_t width, double jitter) {
    const double w = static_cast<double>(width) - 1.0;
    const double h = static_cast<double>(height) - 1.0;
    const double jx = jitter * static_cast<double>(width);
    const double jy = jitter * static_cast<double>(height);
    Quad q = {{{0, 0}, {w, 0}, {w, h}, {0, h}}};
    for (auto& corner : q) {
        corner[0] += rng.uniform(-jx, jx);
        corner[1] += rng.uniform(-jy, jy);
    }
    return q;
}

constexpr int kMaxWarpRetries = 16;

}  // namespace

Image augment_reference(const Image& crop, std::span<const AugmentOp> ops, std::uint64_t seed) {
    if (crop.empty()) throw InvalidArgument("augment_reference: crop is empty");
    Image current = crop;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const AugmentOp& op = ops[i];
        const std::uint64_t op_seed = splitmix64(seed + i);
        Rng rng(op_seed);
        switch (op.kind) {
            case AugmentKind::Blur:
                current = gaussian_blur(current, op.param.value_or(rng.uniform(0.5, 2.0)));
                break;
            case AugmentKind::ZoomIn:
                current = zoom(current, op.param.value_or(rng.uniform(1.0, 1.25)));
                break;
            case AugmentKind::ZoomOut:
                current = zoom(current, op.param.value_or(rng.uniform(0.8, 1.0)));
                break;
            case AugmentKind::Perspective: {
                const double jitter = op.param.value_or(0.05);
                std::optional<std::array<double, 9>> H;
                for (int attempt = 0; attempt < kMaxWarpRetries && !H; ++attempt) {
                    Rng attempt_rng(op_seed + static_cast<std::uint64_t>(attempt));
                    H = homography_for_quad(
                        jittered_quad(attempt_rng, current.height(), current.width(),
                                      attempt_rng.uniform(0.0, jitter)),
                        current.height(), current.width());
                }
                if (!H) throw Error("perspective augmentation kept producing degenerate warps");
                current = perspective_warp(current, *H);
                break;
            }
            case AugmentKind::Elastic:
                current = elastic_warp(current, op.param.value_or(rng.uniform(0.0, 2.0)),
                                       splitmix64(op_seed));
                break;
        }
    }
    return current;
}

}  // namespace sourceswap
