// Test helpers and reference implementations that share no code with the
// library under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "sourceswap/lattice.hpp"
#include "sourceswap/maskops.hpp"

namespace testing {

using sourceswap::BinaryMask;
using sourceswap::Image;
using sourceswap::LatentGrid;

inline LatentGrid random_grid(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    LatentGrid g(c, h, w);
    for (double& v : g.values()) v = nd(eng);
    return g;
}

inline Image random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    Image g(c, h, w);
    for (double& v : g.values()) v = ud(eng);
    return g;
}

/// Union of a few random filled rectangles; never empty.
inline BinaryMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    BinaryMask m(h, w);
    const int blobs = 1 + static_cast<int>(eng() % 3);
    for (int b = 0; b < blobs; ++b) {
        const std::size_t bh = 1 + eng() % std::max<std::size_t>(1, h / 2);
        const std::size_t bw = 1 + eng() % std::max<std::size_t>(1, w / 2);
        const std::size_t y0 = eng() % (h - bh + 1);
        const std::size_t x0 = eng() % (w - bw + 1);
        for (std::size_t y = y0; y < y0 + bh; ++y)
            for (std::size_t x = x0; x < x0 + bw; ++x) m.set(y, x);
    }
    return m;
}

/// Each pixel set independently with probability p.
inline BinaryMask bernoulli_mask(std::size_t h, std::size_t w, double p, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::bernoulli_distribution bd(p);
    BinaryMask m(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m.set(y, x, bd(eng));
    return m;
}

inline BinaryMask rect_mask(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0,
                            std::size_t r1, std::size_t c1) {
    BinaryMask m(h, w);
    for (std::size_t y = r0; y <= r1; ++y)
        for (std::size_t x = c0; x <= c1; ++x) m.set(y, x);
    return m;
}

template <class Tag>
double max_abs_diff(const sourceswap::Grid3<Tag>& a, const sourceswap::Grid3<Tag>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

template <class Tag>
double l2(const sourceswap::Grid3<Tag>& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

/// Direct O(N^2) DFT in the DC-centred layout: stored index k holds
/// frequency k - n/2.
inline std::vector<std::complex<double>> naive_centered_dft(const LatentGrid& g, std::size_t c) {
    const std::size_t h = g.height(), w = g.width();
    std::vector<std::complex<double>> out(h * w);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t ky = 0; ky < h; ++ky) {
        const double fy = static_cast<double>(ky) - static_cast<double>(h / 2);
        for (std::size_t kx = 0; kx < w; ++kx) {
            const double fx = static_cast<double>(kx) - static_cast<double>(w / 2);
            std::complex<double> acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const double ang = -two_pi * (fy * static_cast<double>(y) / static_cast<double>(h) +
                                                  fx * static_cast<double>(x) / static_cast<double>(w));
                    acc += g.at(c, y, x) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            }
            out[ky * w + kx] = acc;
        }
    }
    return out;
}

/// Square dilation / erosion by direct neighbourhood enumeration, with
/// out-of-frame neighbours ignored.
inline BinaryMask enum_morph(const BinaryMask& m, bool dilate, std::size_t r) {
    const long h = static_cast<long>(m.height()), w = static_cast<long>(m.width()), rr = static_cast<long>(r);
    BinaryMask out(m.height(), m.width());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            bool any = false, all = true;
            for (long dy = -rr; dy <= rr; ++dy) {
                for (long dx = -rr; dx <= rr; ++dx) {
                    const long yy = y + dy, xx = x + dx;
                    if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                    const bool v = m.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                    any = any || v;
                    all = all && v;
                }
            }
            out.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), dilate ? any : all);
        }
    }
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() /
             ("sourceswap_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
