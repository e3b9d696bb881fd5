#pragma once
// Seeded raster generators for fixtures and the bundled synthetic corpus.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include "memetrace/image.hpp"

namespace synth_images {

using memetrace::memes::RgbImage;

// Channel values stay inside [kLow, kHigh] so a 10% brightness change never clips.
inline constexpr int kLow = 25;
inline constexpr int kHigh = 230;

inline std::uint8_t clamp_channel(double v) {
    return static_cast<std::uint8_t>(std::clamp(static_cast<int>(std::lround(v)), kLow, kHigh));
}

/// Gradient background with a handful of filled shapes.
inline RgbImage shapes(std::uint64_t seed, std::size_t width = 160, std::size_t height = 160) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto color = [&] {
        return std::array<double, 3>{kLow + unit(rng) * (kHigh - kLow), kLow + unit(rng) * (kHigh - kLow),
                                     kLow + unit(rng) * (kHigh - kLow)};
    };
    RgbImage img;
    img.width = width;
    img.height = height;
    img.rgb.resize(width * height * 3);

    const auto c0 = color(), c1 = color();
    const double angle = unit(rng) * 2 * M_PI;
    const double gx = std::cos(angle), gy = std::sin(angle);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double t = 0.5 + 0.5 * (gx * (x / double(width) - 0.5) + gy * (y / double(height) - 0.5)) * 1.4;
            for (int c = 0; c < 3; ++c) img.at(x, y)[c] = clamp_channel(c0[c] + (c1[c] - c0[c]) * std::clamp(t, 0.0, 1.0));
        }

    const int count = 4 + static_cast<int>(rng() % 4);
    for (int s = 0; s < count; ++s) {
        const auto col = color();
        const double cx = unit(rng) * width, cy = unit(rng) * height;
        const double rx = (0.08 + 0.25 * unit(rng)) * width, ry = (0.08 + 0.25 * unit(rng)) * height;
        const int kind = static_cast<int>(rng() % 3);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                bool inside = false;
                if (kind == 0) inside = dx * dx + dy * dy <= 1.0;
                else if (kind == 1) inside = std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                else inside = dy <= 1.0 && dy >= -1.0 && std::abs(dx) <= (1.0 - dy) / 2;
                if (inside)
                    for (int c = 0; c < 3; ++c) img.at(x, y)[c] = clamp_channel(col[c]);
            }
    }
    return img;
}

/// I.i.d. uniform pixels.
inline RgbImage noise(std::uint64_t seed, std::size_t width = 64, std::size_t height = 64) {
    std::mt19937_64 rng(seed);
    RgbImage img;
    img.width = width;
    img.height = height;
    img.rgb.resize(width * height * 3);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng() & 0xFF);
    return img;
}

/// Multiplies every channel by `factor`, rounding and clamping to [0, 255].
inline RgbImage scale_brightness(const RgbImage& src, double factor) {
    RgbImage out = src;
    for (auto& v : out.rgb) v = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v * factor), 0, 255));
    return out;
}

/// Near-duplicate edit: a small caption bar near the top or bottom edge.
inline RgbImage variant(const RgbImage& base, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RgbImage out = base;
    const std::size_t bar = out.height / 24;
    const bool top = rng() & 1;
    const std::uint8_t shade = static_cast<std::uint8_t>(kLow + rng() % (kHigh - kLow));
    const std::size_t x0 = out.width / 3 + rng() % (out.width / 4);
    for (std::size_t y = 0; y < bar; ++y)
        for (std::size_t x = x0; x < x0 + out.width / 4; ++x) {
            auto* p = out.at(x, top ? y : out.height - 1 - y);
            p[0] = p[1] = p[2] = shade;
        }
    return out;
}

}  // namespace synth_images
