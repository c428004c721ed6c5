#include "sourceswap/maskops.hpp"

#include <algorithm>

namespace sourceswap {

BinaryMask::BinaryMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {
    if (height == 0 || width == 0) throw InvalidArgument("mask dimensions must be positive");
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : BinaryMask(height, width) {
    if (bits.size() != bits_.size()) throw ShapeMismatch("mask bit count does not match H*W");
    for (std::size_t i = 0; i < bits.size(); ++i) bits_[i] = bits[i] != 0 ? 1 : 0;
}

std::size_t BinaryMask::popcount() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> BinaryMask::set_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] != 0) out.push_back(i);
    }
    return out;
}

bool BinaryMask::is_subset_of(const BinaryMask& other) const {
    if (!same_shape(other)) throw ShapeMismatch("mask shapes differ");
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] != 0 && other.bits_[i] == 0) return false;
    }
    return true;
}

BinaryMask BinaryMask::operator&(const BinaryMask& other) const {
    if (!same_shape(other)) throw ShapeMismatch("mask shapes differ");
    BinaryMask out(height_, width_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
    return out;
}

BinaryMask BinaryMask::operator|(const BinaryMask& other) const {
    if (!same_shape(other)) throw ShapeMismatch("mask shapes differ");
    BinaryMask out(height_, width_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] | other.bits_[i];
    return out;
}

BinaryMask BinaryMask::operator~() const {
    BinaryMask out(height_, width_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] ^ 1;
    return out;
}

std::optional<BBox> bounding_box(const BinaryMask& mask) {
    std::optional<BBox> box;
    for (std::size_t y = 0; y < mask.height(); ++y) {
        for (std::size_t x = 0; x < mask.width(); ++x) {
            if (!mask.at(y, x)) continue;
            if (!box) {
                box = BBox{y, x, y, x};
            } else {
                box->row_min = std::min(box->row_min, y);
                box->col_min = std::min(box->col_min, x);
                box->row_max = std::max(box->row_max, y);
                box->col_max = std::max(box->col_max, x);
            }
        }
    }
    return box;
}

namespace {

// One axis of a separable square min/max filter. Erosion is an AND over the
// clipped window, dilation an OR.
std::vector<std::uint8_t> morph_pass(const std::vector<std::uint8_t>& in, std::size_t h,
                                     std::size_t w, std::size_t radius, bool erode, bool along_rows) {
    std::vector<std::uint8_t> out(in.size());
    const std::size_t len = along_rows ? w : h;
    const std::size_t lines = along_rows ? h : w;
    for (std::size_t line = 0; line < lines; ++line) {
        auto idx = [&](std::size_t k) { return along_rows ? line * w + k : k * w + line; };
        // Prefix counts of set pixels make each window query O(1).
        std::vector<std::size_t> prefix(len + 1, 0);
        for (std::size_t k = 0; k < len; ++k) prefix[k + 1] = prefix[k] + in[idx(k)];
        for (std::size_t k = 0; k < len; ++k) {
            const std::size_t lo = k >= radius ? k - radius : 0;
            const std::size_t hi = std::min(len - 1, k + radius);
            const std::size_t count = prefix[hi + 1] - prefix[lo];
            const std::size_t span = hi - lo + 1;
            out[idx(k)] = erode ? (count == span ? 1 : 0) : (count > 0 ? 1 : 0);
        }
    }
    return out;
}

}  // namespace

BinaryMask morph(const BinaryMask& mask, MorphMode mode, std::size_t radius) {
    if (radius == 0) return mask;
    const bool erode_mode = mode == MorphMode::Erode;
    auto rows = morph_pass(mask.bits(), mask.height(), mask.width(), radius, erode_mode, true);
    auto both = morph_pass(rows, mask.height(), mask.width(), radius, erode_mode, false);
    return {mask.height(), mask.width(), std::move(both)};
}

BinaryMask erode(const BinaryMask& mask, std::size_t radius) {
    return morph(mask, MorphMode::Erode, radius);
}

BinaryMask dilate(const BinaryMask& mask, std::size_t radius) {
    return morph(mask, MorphMode::Dilate, radius);
}

CleanedMask clean_reference_mask(const BinaryMask& mask, std::size_t radius) {
    BinaryMask opened = dilate(erode(mask, radius), radius);
    const bool empty = opened.is_empty();
    return {std::move(opened), empty};
}

std::size_t default_clean_radius(std::size_t height, std::size_t width) {
    return (std::min(height, width) + 99) / 100;
}

BinaryMask to_bbox_mask(const BinaryMask& mask, std::size_t margin) {
    const auto box = bounding_box(mask);
    if (!box) throw InvalidArgument("to_bbox_mask: mask is empty");
    const std::size_t r0 = box->row_min >= margin ? box->row_min - margin : 0;
    const std::size_t c0 = box->col_min >= margin ? box->col_min - margin : 0;
    const std::size_t r1 = std::min(mask.height() - 1, box->row_max + margin);
    const std::size_t c1 = std::min(mask.width() - 1, box->col_max + margin);
    BinaryMask out(mask.height(), mask.width());
    for (std::size_t y = r0; y <= r1; ++y) {
        for (std::size_t x = c0; x <= c1; ++x) out.set(y, x);
    }
    return out;
}

namespace {

struct AxisTap {
    std::size_t source;
    std::uint64_t weight;
};

// Taps for one output index along one axis. With source length S and target
// length T, a source pixel spans T units and a target cell spans S units, so
// every overlap is an integer. Growing axes use nearest neighbour (weight S,
// i.e. full coverage).
std::vector<AxisTap> axis_taps(std::size_t out_index, std::size_t src_len, std::size_t dst_len) {
    std::vector<AxisTap> taps;
    if (dst_len >= src_len) {
        const std::size_t nearest = std::min(
            src_len - 1, static_cast<std::size_t>((2 * out_index + 1) * src_len / (2 * dst_len)));
        taps.push_back({nearest, src_len});
        return taps;
    }
    const std::uint64_t lo = static_cast<std::uint64_t>(out_index) * src_len;
    const std::uint64_t hi = lo + src_len;
    for (std::size_t s = static_cast<std::size_t>(lo / dst_len); s < src_len; ++s) {
        const std::uint64_t s_lo = static_cast<std::uint64_t>(s) * dst_len;
        const std::uint64_t s_hi = s_lo + dst_len;
        if (s_lo >= hi) break;
        const std::uint64_t overlap = std::min(hi, s_hi) - std::max(lo, s_lo);
        if (overlap > 0) taps.push_back({s, overlap});
    }
    return taps;
}

}  // namespace

BinaryMask resample_to_latent(const BinaryMask& mask, std::size_t target_h, std::size_t target_w) {
    if (target_h == 0 || target_w == 0) {
        throw InvalidArgument("resample_to_latent: target dimensions must be positive");
    }
    if (target_h == mask.height() && target_w == mask.width()) return mask;
    const std::size_t sh = mask.height();
    const std::size_t sw = mask.width();
    BinaryMask out(target_h, target_w);
    std::vector<std::vector<AxisTap>> col_taps(target_w);
    for (std::size_t x = 0; x < target_w; ++x) col_taps[x] = axis_taps(x, sw, target_w);
    for (std::size_t y = 0; y < target_h; ++y) {
        const auto row_taps = axis_taps(y, sh, target_h);
        for (std::size_t x = 0; x < target_w; ++x) {
            std::uint64_t covered = 0;
            for (const auto& ry : row_taps) {
                for (const auto& cx : col_taps[x]) {
                    if (mask.at(ry.source, cx.source)) covered += ry.weight * cx.weight;
                }
            }
            // Total weight per cell is sh * sw on either branch.
            const std::uint64_t total = static_cast<std::uint64_t>(sh) * sw;
            out.set(y, x, 2 * covered >= total);
        }
    }
    return out;
}

SizeFilterResult size_filter(const BinaryMask& mask, std::size_t image_h, std::size_t image_w) {
    if (mask.height() > image_h || mask.width() > image_w) {
        throw InvalidArgument("size_filter: mask extends beyond the image bounds");
    }
    const auto box = bounding_box(mask);
    if (!box) return {SizeVerdict::EmptyMask, "empty mask"};
    const std::uint64_t bh = box->height();
    const std::uint64_t bw = box->width();
    const std::uint64_t ih = image_h;
    const std::uint64_t iw = image_w;
    auto describe = [&](const char* what) {
        return std::string("mask size: bbox ") + std::to_string(bh) + "x" + std::to_string(bw) +
               " vs image " + std::to_string(ih) + "x" + std::to_string(iw) + " (" + what + ")";
    };
    // bbox > 3/4 image  <=>  4*bbox > 3*image;  bbox < 1/5 image  <=>  5*bbox < image.
    if (4 * bh > 3 * ih) return {SizeVerdict::TooTall, describe("height > 3/4")};
    if (4 * bw > 3 * iw) return {SizeVerdict::TooWide, describe("width > 3/4")};
    if (5 * bh < ih) return {SizeVerdict::TooShort, describe("height < 1/5")};
    if (5 * bw < iw) return {SizeVerdict::TooNarrow, describe("width < 1/5")};
    return {SizeVerdict::Accept, {}};
}

BinaryMask boundary_region(const BinaryMask& fine_mask, std::size_t dilate_radius,
                           std::size_t rect_margin) {
    if (fine_mask.is_empty()) throw InvalidArgument("boundary_region: fine mask is empty");
    const BinaryMask dilated = dilate(fine_mask, dilate_radius);
    const BinaryMask rect = to_bbox_mask(dilated, rect_margin);
    return rect & ~dilated;
}

std::size_t default_boundary_dilate_radius(std::size_t height, std::size_t width) {
    return (std::min(height, width) + 49) / 50;
}

}  // namespace sourceswap
