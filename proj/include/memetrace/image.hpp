#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace memetrace::memes {

/// 8-bit interleaved RGB raster.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;  // width * height * 3

    std::uint8_t* at(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
    const std::uint8_t* at(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
};

/// Single-channel raster, values in [0, 255].
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;
};

/// Decodes PNG, JPEG or binary PGM/PPM, chosen by magic bytes. Animated PNGs
/// yield their default frame. Throws IoError on anything else.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Rec. 601 luma.
GrayImage to_luma(const RgbImage& image);

/// Area-averaging resize; each output pixel is the mean of the source region it covers.
GrayImage resize_area(const GrayImage& image, std::size_t width, std::size_t height);

}  // namespace memetrace::memes
