#pragma once

#include <filesystem>

#include "sourceswap/lattice.hpp"
#include "sourceswap/maskops.hpp"

namespace sourceswap {

/// 8-bit PNG to a 3-channel image in [0, 1]. Gray inputs are replicated,
/// alpha is dropped.
Image load_image_png(const std::filesystem::path& path);

/// Writes 1- or 3-channel images as 8-bit PNG; values are clamped to [0, 1]
/// and rounded.
void save_image_png(const Image& image, const std::filesystem::path& path);

/// 8-bit single-channel PNG, nonzero = set. Colour inputs are converted to
/// gray first.
BinaryMask load_mask_png(const std::filesystem::path& path);
void save_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

}  // namespace sourceswap
