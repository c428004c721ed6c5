#include "sourceswap/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace sourceswap {

namespace {

struct RawPng {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> rgb;  // interleaved, 3 bytes per pixel
};

RawPng read_rgb(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    RawPng raw;
    raw.height = image.height;
    raw.width = image.width;
    raw.rgb.resize(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, raw.rgb.data(), 0, nullptr) == 0) {
        const std::string message = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + message);
    }
    if (raw.height == 0 || raw.width == 0) throw IoError("PNG '" + path.string() + "' is empty");
    return raw;
}

void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
               png_uint_32 format, const std::vector<std::uint8_t>& pixels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

std::uint8_t quantize(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

}  // namespace

Image load_image_png(const std::filesystem::path& path) {
    const RawPng raw = read_rgb(path);
    Image out(3, raw.height, raw.width);
    for (std::size_t y = 0; y < raw.height; ++y) {
        for (std::size_t x = 0; x < raw.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                out.at(c, y, x) = raw.rgb[(y * raw.width + x) * 3 + c] / 255.0;
            }
        }
    }
    return out;
}

void save_image_png(const Image& image, const std::filesystem::path& path) {
    const std::size_t ch = image.channels();
    if (ch != 1 && ch != 3) {
        throw InvalidArgument("save_image_png: only 1- or 3-channel images are supported");
    }
    std::vector<std::uint8_t> pixels(image.size());
    for (std::size_t y = 0; y < image.height(); ++y) {
        for (std::size_t x = 0; x < image.width(); ++x) {
            for (std::size_t c = 0; c < ch; ++c) {
                pixels[(y * image.width() + x) * ch + c] = quantize(image.at(c, y, x));
            }
        }
    }
    write_png(path, image.height(), image.width(), ch == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY,
              pixels);
}

BinaryMask load_mask_png(const std::filesystem::path& path) {
    const RawPng raw = read_rgb(path);
    BinaryMask mask(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.height * raw.width; ++i) {
        const bool set = raw.rgb[3 * i] != 0 || raw.rgb[3 * i + 1] != 0 || raw.rgb[3 * i + 2] != 0;
        mask.set(i / raw.width, i % raw.width, set);
    }
    return mask;
}

void save_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
    std::vector<std::uint8_t> pixels(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) pixels[i] = mask.test(i) ? 255 : 0;
    write_png(path, mask.height(), mask.width(), PNG_FORMAT_GRAY, pixels);
}

}  // namespace sourceswap
