#include "sourceswap/lattice.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <numbers>

namespace sourceswap {

namespace {

// FFTW's planner is not re-entrant; plan creation and destruction are
// serialized while execution runs unlocked.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

void transform_plane(std::complex<double>* data, std::size_t height, std::size_t width, int sign) {
    auto* buf = reinterpret_cast<fftw_complex*>(data);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), buf, buf, sign,
                                FFTW_ESTIMATE);
    }
    if (plan == nullptr) {
        throw Error("fftw failed to create a plan");
    }
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
}

// Index map between natural (DC at 0) and centered (DC at n/2) layouts.
inline std::size_t to_centered(std::size_t k, std::size_t n) { return (k + n / 2) % n; }

}  // namespace

FrequencyGrid::FrequencyGrid(std::size_t channels, std::size_t height, std::size_t width,
                             bool dc_centered, bool from_real)
    : channels_(channels),
      height_(height),
      width_(width),
      dc_centered_(dc_centered),
      from_real_(from_real) {
    if (channels == 0 || height == 0 || width == 0) {
        throw InvalidArgument("frequency grid dimensions must be positive");
    }
    data_.assign(channels * height * width, {0.0, 0.0});
}

FrequencyGrid& FrequencyGrid::operator+=(const FrequencyGrid& other) {
    if (channels_ != other.channels_ || height_ != other.height_ || width_ != other.width_) {
        throw ShapeMismatch("cannot add spectra of different shapes");
    }
    if (dc_centered_ != other.dc_centered_) {
        throw ShapeMismatch("cannot add spectra with different layouts");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    from_real_ = from_real_ && other.from_real_;
    return *this;
}

SpectralWeights::SpectralWeights(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (height == 0 || width == 0) throw InvalidArgument("spectral weights must be non-empty");
    if (values_.size() != height * width) {
        throw ShapeMismatch("spectral weight count does not match H*W");
    }
}

SpectralWeights SpectralWeights::complement() const {
    std::vector<double> out(values_.size());
    std::transform(values_.begin(), values_.end(), out.begin(), [](double w) { return 1.0 - w; });
    return {height_, width_, std::move(out)};
}

double LowPassFilter::sigma() const noexcept {
    return stop_frequency_ / std::sqrt(2.0 * std::numbers::ln2);
}

double LowPassFilter::response_at_radius(double r) const {
    const double s = sigma();
    return std::exp(-(r * r) / (2.0 * s * s));
}

double normalized_radius(std::size_t y, std::size_t x, std::size_t height, std::size_t width) {
    const double fy = (static_cast<double>(y) - static_cast<double>(height / 2)) / (height / 2.0);
    const double fx = (static_cast<double>(x) - static_cast<double>(width / 2)) / (width / 2.0);
    return std::sqrt(fy * fy + fx * fx);
}

FrequencyGrid fft2(const LatentGrid& grid) {
    require_finite(grid, "fft2");
    const std::size_t h = grid.height();
    const std::size_t w = grid.width();
    FrequencyGrid out(grid.channels(), h, w, /*dc_centered=*/true, /*from_real=*/true);
    std::vector<std::complex<double>> work(h * w);
    for (std::size_t c = 0; c < grid.channels(); ++c) {
        const auto plane = grid.plane(c);
        std::transform(plane.begin(), plane.end(), work.begin(),
                       [](double v) { return std::complex<double>(v, 0.0); });
        transform_plane(work.data(), h, w, FFTW_FORWARD);
        for (std::size_t ky = 0; ky < h; ++ky) {
            for (std::size_t kx = 0; kx < w; ++kx) {
                out.at(c, to_centered(ky, h), to_centered(kx, w)) = work[ky * w + kx];
            }
        }
    }
    return out;
}

LatentGrid ifft2(const FrequencyGrid& freq) {
    const std::size_t h = freq.height();
    const std::size_t w = freq.width();
    const double norm = 1.0 / static_cast<double>(h * w);
    LatentGrid out(freq.channels(), h, w);
    std::vector<std::complex<double>> work(h * w);
    double max_re = 0.0;
    double max_im = 0.0;
    for (std::size_t c = 0; c < freq.channels(); ++c) {
        for (std::size_t ky = 0; ky < h; ++ky) {
            for (std::size_t kx = 0; kx < w; ++kx) {
                const std::size_t sy = freq.dc_centered() ? to_centered(ky, h) : ky;
                const std::size_t sx = freq.dc_centered() ? to_centered(kx, w) : kx;
                work[ky * w + kx] = freq.at(c, sy, sx);
            }
        }
        transform_plane(work.data(), h, w, FFTW_BACKWARD);
        auto plane = out.plane(c);
        for (std::size_t i = 0; i < work.size(); ++i) {
            const std::complex<double> v = work[i] * norm;
            plane[i] = v.real();
            max_re = std::max(max_re, std::abs(v.real()));
            max_im = std::max(max_im, std::abs(v.imag()));
        }
    }
    if (freq.from_real() && max_im > kImagResidueRelTol * max_re + kImagResidueAbsFloor) {
        throw SymmetryBroken("ifft2: imaginary residue " + std::to_string(max_im) +
                             " exceeds tolerance for a real signal (max |re| = " +
                             std::to_string(max_re) + ")");
    }
    require_finite(out, "ifft2");
    return out;
}

LowPassFilter make_lpf(std::size_t height, std::size_t width, double stop_frequency) {
    if (!(stop_frequency > 0.0 && stop_frequency <= 1.0)) {
        throw InvalidArgument("stop frequency must lie in (0, 1], got " +
                              std::to_string(stop_frequency));
    }
    if (height == 0 || width == 0) throw InvalidArgument("filter dimensions must be positive");
    const double sigma = stop_frequency / std::sqrt(2.0 * std::numbers::ln2);
    std::vector<double> response(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double r = normalized_radius(y, x, height, width);
            response[y * width + x] = std::exp(-(r * r) / (2.0 * sigma * sigma));
        }
    }
    return LowPassFilter(stop_frequency, SpectralWeights(height, width, std::move(response)));
}

FrequencyGrid hadamard(const FrequencyGrid& freq, const SpectralWeights& weights) {
    if (freq.height() != weights.height() || freq.width() != weights.width()) {
        throw ShapeMismatch("filter shape does not match spectrum");
    }
    if (!freq.dc_centered()) {
        throw ShapeMismatch("spectral weights are defined for the DC-centered layout");
    }
    FrequencyGrid out = freq;
    for (std::size_t c = 0; c < freq.channels(); ++c) {
        for (std::size_t y = 0; y < freq.height(); ++y) {
            for (std::size_t x = 0; x < freq.width(); ++x) {
                out.at(c, y, x) *= weights.at(y, x);
            }
        }
    }
    return out;
}

FrequencyGrid hadamard(const FrequencyGrid& freq, const LowPassFilter& filter) {
    return hadamard(freq, filter.weights());
}

}  // namespace sourceswap
