#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sourceswap/error.hpp"

namespace sourceswap {

/// Dense channel-major C×H×W grid of doubles. The tag keeps latents and
/// pixel images from being mixed up at compile time.
template <class Tag>
class Grid3 {
public:
    Grid3() = default;

    Grid3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
        : channels_(channels), height_(height), width_(width) {
        if (channels == 0 || height == 0 || width == 0) {
            throw InvalidArgument("grid dimensions must be positive");
        }
        data_.assign(channels * height * width, fill);
    }

    Grid3(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data)
        : Grid3(channels, height, width) {
        if (data.size() != data_.size()) {
            throw ShapeMismatch("grid data length does not match C*H*W");
        }
        data_ = std::move(data);
    }

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * height_ + y) * width_ + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * height_ + y) * width_ + x];
    }

    std::span<double> plane(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(std::size_t c) const {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Grid3& other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }

    template <class OtherTag>
    bool same_shape(const Grid3<OtherTag>& other) const noexcept {
        return channels_ == other.channels() && height_ == other.height() && width_ == other.width();
    }

    bool operator==(const Grid3&) const = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

struct LatentTag {};
struct PixelTag {};

using LatentGrid = Grid3<LatentTag>;
/// Pixel image in planar RGB (or gray) layout, values nominally in [0, 1].
using Image = Grid3<PixelTag>;

template <class Tag>
bool all_finite(const Grid3<Tag>& grid) {
    for (double v : grid.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

template <class Tag>
void require_finite(const Grid3<Tag>& grid, const char* what) {
    if (!all_finite(grid)) {
        throw NonFiniteValue(std::string(what) + ": grid contains NaN or Inf");
    }
}

/// Per-channel 2D spectrum. Layout is recorded so a filter built for the
/// DC-centered layout can never be applied to an uncentered one by accident.
class FrequencyGrid {
public:
    FrequencyGrid(std::size_t channels, std::size_t height, std::size_t width, bool dc_centered,
                  bool from_real);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return height_ * width_; }
    bool dc_centered() const noexcept { return dc_centered_; }
    /// True when the spectrum came from real data and is expected to stay
    /// conjugate symmetric.
    bool from_real() const noexcept { return from_real_; }

    std::complex<double>& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * height_ + y) * width_ + x];
    }
    const std::complex<double>& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * height_ + y) * width_ + x];
    }
    std::span<std::complex<double>> values() noexcept { return data_; }
    std::span<const std::complex<double>> values() const noexcept { return data_; }

    /// Row/col of the DC bin in this grid's layout.
    std::size_t dc_row() const noexcept { return dc_centered_ ? height_ / 2 : 0; }
    std::size_t dc_col() const noexcept { return dc_centered_ ? width_ / 2 : 0; }

    FrequencyGrid& operator+=(const FrequencyGrid& other);

private:
    std::size_t channels_;
    std::size_t height_;
    std::size_t width_;
    bool dc_centered_;
    bool from_real_;
    std::vector<std::complex<double>> data_;
};

/// Real-valued H×W weights in the DC-centered spectral layout, shared by all
/// channels.
class SpectralWeights {
public:
    SpectralWeights(std::size_t height, std::size_t width, std::vector<double> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    double at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
    std::span<const double> values() const noexcept { return values_; }

    /// 1 - w, elementwise.
    SpectralWeights complement() const;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<double> values_;
};

/// Radial Gaussian low-pass response over Nyquist-normalized frequency.
/// The stop frequency is the half-power point: H(stop) = 0.5.
class LowPassFilter {
public:
    std::size_t height() const noexcept { return weights_.height(); }
    std::size_t width() const noexcept { return weights_.width(); }
    double stop_frequency() const noexcept { return stop_frequency_; }
    double sigma() const noexcept;

    /// Closed-form response at normalized radius r.
    double response_at_radius(double r) const;
    double at(std::size_t y, std::size_t x) const { return weights_.at(y, x); }

    const SpectralWeights& weights() const noexcept { return weights_; }
    SpectralWeights high_pass() const { return weights_.complement(); }

private:
    friend LowPassFilter make_lpf(std::size_t, std::size_t, double);
    LowPassFilter(double stop_frequency, SpectralWeights weights)
        : stop_frequency_(stop_frequency), weights_(std::move(weights)) {}

    double stop_frequency_;
    SpectralWeights weights_;
};

inline constexpr double kDefaultStopFrequency = 0.3;

/// Tolerances used by ifft2 when checking that a real signal came back real.
inline constexpr double kImagResidueRelTol = 1e-6;
inline constexpr double kImagResidueAbsFloor = 1e-12;

/// Normalized frequency radius of centered bin (y, x) for an H×W spectrum.
/// Each axis is scaled so that Nyquist maps to 1; radius is in [0, sqrt(2)].
double normalized_radius(std::size_t y, std::size_t x, std::size_t height, std::size_t width);

FrequencyGrid fft2(const LatentGrid& grid);
LatentGrid ifft2(const FrequencyGrid& freq);

LowPassFilter make_lpf(std::size_t height, std::size_t width,
                       double stop_frequency = kDefaultStopFrequency);

FrequencyGrid hadamard(const FrequencyGrid& freq, const SpectralWeights& weights);
FrequencyGrid hadamard(const FrequencyGrid& freq, const LowPassFilter& filter);

}  // namespace sourceswap
