#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "memetrace/common.hpp"
#include "memetrace/memes.hpp"

namespace memetrace::memes {

namespace {

constexpr std::size_t kSide = 32;
constexpr std::size_t kBlock = 8;

// Rows 1..8 of the orthonormal 32-point DCT-II basis.
const std::array<std::array<double, kSide>, kBlock>& dct_rows() {
    static const auto rows = [] {
        std::array<std::array<double, kSide>, kBlock> r{};
        const double scale = std::sqrt(2.0 / kSide);
        for (std::size_t u = 0; u < kBlock; ++u)
            for (std::size_t x = 0; x < kSide; ++x)
                r[u][x] = scale * std::cos(std::numbers::pi * static_cast<double>((2 * x + 1) * (u + 1)) / (2.0 * kSide));
        return r;
    }();
    return rows;
}

}  // namespace

Hash phash(const GrayImage& image) {
    const GrayImage small = resize_area(image, kSide, kSide);
    const auto& C = dct_rows();

    // rowpass[y][v] = sum_x img[y][x] * C[v][x]
    std::array<std::array<double, kBlock>, kSide> rowpass{};
    for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t v = 0; v < kBlock; ++v) {
            double s = 0;
            for (std::size_t x = 0; x < kSide; ++x) s += small.pixels[y * kSide + x] * C[v][x];
            rowpass[y][v] = s;
        }
    std::array<double, kBlock * kBlock> coef{};
    for (std::size_t u = 0; u < kBlock; ++u)
        for (std::size_t v = 0; v < kBlock; ++v) {
            double s = 0;
            for (std::size_t y = 0; y < kSide; ++y) s += C[u][y] * rowpass[y][v];
            // rounding residue on flat regions would otherwise decide bits
            coef[u * kBlock + v] = std::abs(s) < 1e-9 ? 0.0 : s;
        }

    auto sorted = coef;
    std::sort(sorted.begin(), sorted.end());
    const double median = (sorted[31] + sorted[32]) / 2;
    Hash h = 0;
    for (std::size_t i = 0; i < coef.size(); ++i)
        if (coef[i] > median) h |= Hash{1} << (63 - i);
    return h;
}

Hash phash(const RgbImage& image) { return phash(to_luma(image)); }

std::string hash_hex(Hash h) { return hex64(h); }

Hash parse_hash(std::string_view text) { return parse_hex64(text); }

}  // namespace memetrace::memes
