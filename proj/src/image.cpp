#include "aperture/image.hpp"

#include "aperture/error.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace aperture {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(ErrorKind::InternalError, "negative image size");
    data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill.r;
        data_[i + 1] = fill.g;
        data_[i + 2] = fill.b;
    }
}

Image Image::crop(const PixelRect& rect) const {
    if (!bounds().contains(rect) || rect.width < 0 || rect.height < 0) {
        throw Error(ErrorKind::InternalError, "crop rect outside image bounds");
    }
    Image out(rect.width, rect.height);
    const std::size_t row_bytes = static_cast<std::size_t>(rect.width) * 3;
    for (int y = 0; y < rect.height; ++y) {
        const auto* src = data_.data() + offset(rect.x, rect.y + y);
        std::memcpy(out.data_.data() + static_cast<std::size_t>(y) * row_bytes, src, row_bytes);
    }
    return out;
}

void Image::fill_rect(const PixelRect& rect, Rgb c) {
    const int x0 = std::max(rect.x, 0);
    const int y0 = std::max(rect.y, 0);
    const int x1 = std::min(rect.right(), width_);
    const int y1 = std::min(rect.bottom(), height_);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) set(x, y, c);
    }
}

Mask::Mask(int width, int height, bool value) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(ErrorKind::InternalError, "negative mask size");
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), value ? 1 : 0);
}

long long Mask::count() const {
    return std::count(bits_.begin(), bits_.end(), std::uint8_t{1});
}

std::uint64_t Mask::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    mix(static_cast<std::uint64_t>(width_));
    mix(static_cast<std::uint64_t>(height_));
    for (auto b : bits_) mix(b);
    return h;
}

namespace {

struct PngWriteBuffer {
    std::vector<std::uint8_t> bytes;
};

void png_write_to_buffer(png_structp png, png_bytep data, png_size_t length) {
    auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
    buf->bytes.insert(buf->bytes.end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct PngReadCursor {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;
};

void png_read_from_buffer(png_structp png, png_bytep out, png_size_t length) {
    auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + length > cur->data.size()) png_error(png, "truncated PNG stream");
    std::memcpy(out, cur->data.data() + cur->pos, length);
    cur->pos += length;
}

[[noreturn]] void png_error_throw(png_structp, png_const_charp msg) {
    throw Error(ErrorKind::IoError, std::string("png: ") + msg);
}

void png_warning_ignore(png_structp, png_const_charp) {}

// Writes rows produced by `row_at(y, buffer)`; bit_depth/color_type select the layout.
template <typename RowFn>
std::vector<std::uint8_t> write_png_rows(int width, int height, int bit_depth, int color_type,
                                         std::size_t row_bytes, RowFn&& row_at) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
    if (png == nullptr) throw Error(ErrorKind::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    PngWriteBuffer buffer;
    try {
        if (info == nullptr) throw Error(ErrorKind::IoError, "png_create_info_struct failed");
        png_set_write_fn(png, &buffer, png_write_to_buffer, png_flush_noop);
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<std::uint8_t> row(row_bytes);
        for (int y = 0; y < height; ++y) {
            row_at(y, row);
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return std::move(buffer.bytes);
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;  // 8-bit samples after expansion
};

DecodedPng read_png_rows(std::span<const std::uint8_t> data, bool want_gray) {
    if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) {
        throw Error(ErrorKind::IoError, "not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
    if (png == nullptr) throw Error(ErrorKind::IoError, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    PngReadCursor cursor{data, 0};
    DecodedPng out;
    try {
        if (info == nullptr) throw Error(ErrorKind::IoError, "png_create_info_struct failed");
        png_set_read_fn(png, &cursor, png_read_from_buffer);
        png_read_info(png, info);
        const auto color_type = png_get_color_type(png, info);
        const auto bit_depth = png_get_bit_depth(png, info);
        if (bit_depth == 16) png_set_strip_16(png);
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
            if (want_gray) {
                png_set_packing(png);
            } else {
                png_set_expand_gray_1_2_4_to_8(png);
            }
        }
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
        if (want_gray) {
            if (color_type & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        } else if (!(color_type & PNG_COLOR_MASK_COLOR)) {
            png_set_gray_to_rgb(png);
        }
        png_read_update_info(png, info);
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        out.channels = png_get_channels(png, info);
        const std::size_t row_bytes = png_get_rowbytes(png, info);
        out.pixels.resize(row_bytes * static_cast<std::size_t>(out.height));
        std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
        for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.pixels.data() + row_bytes * y;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
    if (image.empty()) throw Error(ErrorKind::InternalError, "cannot encode an empty image");
    const std::size_t row_bytes = static_cast<std::size_t>(image.width()) * 3;
    const auto bytes = image.bytes();
    return write_png_rows(image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, row_bytes,
                          [&](int y, std::vector<std::uint8_t>& row) {
                              std::memcpy(row.data(), bytes.data() + row_bytes * y, row_bytes);
                          });
}

Image decode_png(std::span<const std::uint8_t> png) {
    auto decoded = read_png_rows(png, false);
    if (decoded.channels != 3) throw Error(ErrorKind::IoError, "unexpected PNG channel count");
    Image image(decoded.width, decoded.height);
    std::copy(decoded.pixels.begin(), decoded.pixels.end(), image.bytes().begin());
    return image;
}

std::vector<std::uint8_t> encode_mask_png(const Mask& mask) {
    if (mask.width() == 0 || mask.height() == 0) throw Error(ErrorKind::InternalError, "cannot encode an empty mask");
    const std::size_t row_bytes = (static_cast<std::size_t>(mask.width()) + 7) / 8;
    return write_png_rows(mask.width(), mask.height(), 1, PNG_COLOR_TYPE_GRAY, row_bytes,
                          [&](int y, std::vector<std::uint8_t>& row) {
                              std::fill(row.begin(), row.end(), std::uint8_t{0});
                              for (int x = 0; x < mask.width(); ++x) {
                                  if (mask.get(x, y)) row[static_cast<std::size_t>(x) / 8] |= 0x80u >> (x % 8);
                              }
                          });
}

Mask decode_mask_png(std::span<const std::uint8_t> png) {
    auto decoded = read_png_rows(png, true);
    if (decoded.channels != 1) throw Error(ErrorKind::IoError, "mask PNG must be grayscale");
    Mask mask(decoded.width, decoded.height);
    for (int y = 0; y < decoded.height; ++y) {
        for (int x = 0; x < decoded.width; ++x) {
            mask.set(x, y, decoded.pixels[static_cast<std::size_t>(y) * decoded.width + x] != 0);
        }
    }
    return mask;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

std::string base64_encode(std::span<const std::uint8_t> data) {
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw Error(ErrorKind::IoError, "base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw Error(ErrorKind::IoError, "invalid base64 payload");
    std::size_t padding = 0;
    if (!text.empty() && text.back() == '=') ++padding;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

} // namespace aperture
