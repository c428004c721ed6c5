#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sourceswap/lattice.hpp"

namespace sourceswap {

enum class AugmentKind { Blur, ZoomIn, ZoomOut, Perspective, Elastic };

/// One augmentation step. When `param` is unset it is drawn from the seeded
/// default range:
///   blur        sigma   in [0.5, 2]
///   zoom-in     scale   in [1, 1.25]
///   zoom-out    scale   in [0.8, 1]
///   perspective jitter  in [0, 0.05] of the side length, per corner
///   elastic     alpha   in [0, 2] px maximum displacement
struct AugmentOp {
    AugmentKind kind;
    std::optional<double> param;
};

std::string_view to_string(AugmentKind kind);

/// Comma-separated list such as "blur:1.5,zoom-in,perspective".
std::vector<AugmentOp> parse_augment_list(std::string_view text);

/// Applies the ops in order. Op i draws its parameters from its own stream
/// derived from (seed, i).
Image augment_reference(const Image& crop, std::span<const AugmentOp> ops, std::uint64_t seed);

/// Normalized 1D Gaussian taps, radius ceil(3 * sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge replication.
Image gaussian_blur(const Image& image, double sigma);

/// Scale about the image centre; scale > 1 zooms in, < 1 zooms out with a
/// zero border. Bilinear sampling.
Image zoom(const Image& image, double scale);

/// Corner positions (x, y) in source pixel coordinates for the output corners
/// top-left, top-right, bottom-right, bottom-left.
using Quad = std::array<std::array<double, 2>, 4>;

/// Row-major 3x3 homography taking output pixel (x, y, 1) to source
/// coordinates. Empty if the quad is degenerate.
std::optional<std::array<double, 9>> homography_for_quad(const Quad& quad, std::size_t height,
                                                         std::size_t width);

Image perspective_warp(const Image& image, const std::array<double, 9>& homography);

/// Smooth random displacement field with maximum magnitude `alpha` pixels.
Image elastic_warp(const Image& image, double alpha, std::uint64_t seed, double smoothing = 4.0);

}  // namespace sourceswap
