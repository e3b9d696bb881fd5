#include "memetrace/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "memetrace/common.hpp"

namespace memetrace::memes {

namespace {

bool starts_with(std::span<const std::uint8_t> b, std::initializer_list<std::uint8_t> magic) {
    return b.size() >= magic.size() && std::equal(magic.begin(), magic.end(), b.begin());
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw IoError(std::string("PNG decode failed: ") + img.message);
    img.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = img.width;
    out.height = img.height;
    out.rgb.resize(PNG_IMAGE_SIZE(img));
    png_color white{255, 255, 255};
    if (!png_image_finish_read(&img, &white, out.rgb.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("PNG decode failed: " + msg);
    }
    return out;
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// Returns false with err.message set on failure. Kept free of objects with
// destructors because of longjmp.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, RgbImage& out, JpegError& err) {
    jpeg_decompress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    err.mgr.emit_message = jpeg_silent;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = cinfo.output_width;
    out.height = cinfo.output_height;
    out.rgb.resize(out.width * out.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

bool encode_jpeg_raw(const RgbImage& image, int quality, unsigned char** buf, unsigned long* size, JpegError& err) {
    jpeg_compress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    err.mgr.emit_message = jpeg_silent;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, buf, size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPROW>(image.rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

// Binary PGM (P5) / PPM (P6) with maxval <= 255.
RgbImage decode_pnm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 2;
    auto next_int = [&]() -> std::size_t {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (++digits > 9) throw IoError("PNM header value too large");
        }
        if (digits == 0) throw IoError("malformed PNM header");
        return v;
    };
    const bool color = bytes[1] == '6';
    RgbImage out;
    out.width = next_int();
    out.height = next_int();
    const std::size_t maxval = next_int();
    if (maxval == 0 || maxval > 255) throw IoError("unsupported PNM maxval");
    ++pos;  // single whitespace before raster
    const std::size_t channels = color ? 3 : 1;
    const std::size_t n = out.width * out.height;
    if (bytes.size() < pos + n * channels) throw IoError("truncated PNM raster");
    out.rgb.resize(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t v = bytes[pos + i * channels + (color ? c : 0)];
            out.rgb[i * 3 + c] = static_cast<std::uint8_t>(v * 255 / maxval);
        }
    }
    return out;
}

}  // namespace

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
    RgbImage out;
    if (starts_with(bytes, {0x89, 'P', 'N', 'G'})) {
        out = decode_png(bytes);
    } else if (starts_with(bytes, {0xFF, 0xD8, 0xFF})) {
        JpegError err{};
        if (!decode_jpeg_raw(bytes, out, err)) throw IoError(std::string("JPEG decode failed: ") + err.message);
    } else if (starts_with(bytes, {'P', '5'}) || starts_with(bytes, {'P', '6'})) {
        out = decode_pnm(bytes);
    } else {
        throw IoError("unrecognized image format");
    }
    if (out.width == 0 || out.height == 0) throw IoError("image has no pixels");
    return out;
}

RgbImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0, nullptr))
        throw IoError(std::string("PNG encode failed: ") + img.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr))
        throw IoError(std::string("PNG encode failed: ") + img.message);
    out.resize(size);
    return out;
}

std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality) {
    if (quality < 1 || quality > 100) throw InvalidArgument("JPEG quality must be in [1, 100]");
    unsigned char* buf = nullptr;
    unsigned long size = 0;
    JpegError err{};
    const bool ok = encode_jpeg_raw(image, quality, &buf, &size, err);
    std::vector<std::uint8_t> out;
    if (ok) out.assign(buf, buf + size);
    std::free(buf);
    if (!ok) throw IoError(std::string("JPEG encode failed: ") + err.message);
    return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GrayImage to_luma(const RgbImage& image) {
    GrayImage g;
    g.width = image.width;
    g.height = image.height;
    g.pixels.resize(image.width * image.height);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        const auto* p = &image.rgb[i * 3];
        g.pixels[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return g;
}

namespace {

// weights[o] lists (source index, overlap) for output cell o along one axis.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src, std::size_t dst) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t o = 0; o < dst; ++o) {
        const double lo = static_cast<double>(o) * scale, hi = static_cast<double>(o + 1) * scale;
        for (auto s = static_cast<std::size_t>(std::floor(lo)); s < src && static_cast<double>(s) < hi; ++s) {
            const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
            if (overlap > 0) w[o].emplace_back(s, overlap / scale);
        }
    }
    return w;
}

}  // namespace

GrayImage resize_area(const GrayImage& image, std::size_t width, std::size_t height) {
    if (image.width == 0 || image.height == 0 || width == 0 || height == 0)
        throw InvalidArgument("resize of an empty image");
    const auto wx = area_weights(image.width, width), wy = area_weights(image.height, height);
    // horizontal pass then vertical pass
    std::vector<double> tmp(width * image.height, 0.0);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (const auto& [s, w] : wx[x]) tmp[y * width + x] += w * image.pixels[y * image.width + s];
    GrayImage out;
    out.width = width;
    out.height = height;
    out.pixels.assign(width * height, 0.0);
    for (std::size_t y = 0; y < height; ++y)
        for (const auto& [s, w] : wy[y])
            for (std::size_t x = 0; x < width; ++x) out.pixels[y * width + x] += w * tmp[s * width + x];
    return out;
}

}  // namespace memetrace::memes
