#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sourceswap/error.hpp"

namespace sourceswap {

/// H×W boolean grid. Empty (all-clear) masks are valid values; operations
/// that need set pixels check is_empty() and reject.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, bool fill = false);
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool at(std::size_t y, std::size_t x) const { return bits_[y * width_ + x] != 0; }
    void set(std::size_t y, std::size_t x, bool value = true) { bits_[y * width_ + x] = value ? 1 : 0; }
    bool test(std::size_t index) const { return bits_[index] != 0; }

    std::size_t popcount() const noexcept;
    bool is_empty() const noexcept { return popcount() == 0; }
    bool same_shape(const BinaryMask& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }

    /// Row-major flat indices of set pixels.
    std::vector<std::size_t> set_indices() const;

    bool is_subset_of(const BinaryMask& other) const;
    BinaryMask operator&(const BinaryMask& other) const;
    BinaryMask operator|(const BinaryMask& other) const;
    BinaryMask operator~() const;

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
    bool operator==(const BinaryMask&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Inclusive pixel rectangle.
struct BBox {
    std::size_t row_min = 0;
    std::size_t col_min = 0;
    std::size_t row_max = 0;
    std::size_t col_max = 0;

    std::size_t height() const noexcept { return row_max - row_min + 1; }
    std::size_t width() const noexcept { return col_max - col_min + 1; }
    bool operator==(const BBox&) const = default;
};

std::optional<BBox> bounding_box(const BinaryMask& mask);

enum class MorphMode { Erode, Dilate };

/// Square (2r+1)×(2r+1) structuring element, clipped at the borders:
/// out-of-frame neighbours are ignored rather than treated as clear.
BinaryMask morph(const BinaryMask& mask, MorphMode mode, std::size_t radius);
BinaryMask erode(const BinaryMask& mask, std::size_t radius);
BinaryMask dilate(const BinaryMask& mask, std::size_t radius);

struct CleanedMask {
    BinaryMask mask;
    bool empty = false;  ///< opening removed every pixel; caller decides.
};

/// Morphological opening (erode then dilate, same radius).
CleanedMask clean_reference_mask(const BinaryMask& mask, std::size_t radius);

/// ceil(0.01 * min(H, W)).
std::size_t default_clean_radius(std::size_t height, std::size_t width);

/// Filled rectangle over the set pixels, grown by margin and clipped.
BinaryMask to_bbox_mask(const BinaryMask& mask, std::size_t margin = 0);

/// Area-average downsampling with threshold 0.5 (ties set); axes that grow
/// use nearest neighbour. Coverage is computed in exact integer arithmetic.
BinaryMask resample_to_latent(const BinaryMask& mask, std::size_t target_h, std::size_t target_w);

enum class SizeVerdict { Accept, EmptyMask, TooTall, TooWide, TooShort, TooNarrow };

struct SizeFilterResult {
    SizeVerdict verdict = SizeVerdict::Accept;
    std::string reason;
    bool accepted() const noexcept { return verdict == SizeVerdict::Accept; }
};

/// Rejects masks whose bbox height or width is greater than 3/4 or smaller
/// than 1/5 of the image's height or width. Comparisons are strict and exact.
SizeFilterResult size_filter(const BinaryMask& mask, std::size_t image_h, std::size_t image_w);

/// Band around an object used for scene-fidelity scoring:
/// bbox(dilate(fine, r), margin) minus dilate(fine, r).
BinaryMask boundary_region(const BinaryMask& fine_mask, std::size_t dilate_radius,
                           std::size_t rect_margin = 0);

/// ceil(0.02 * min(H, W)).
std::size_t default_boundary_dilate_radius(std::size_t height, std::size_t width);

}  // namespace sourceswap
