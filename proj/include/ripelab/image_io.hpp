#pragma once

// PNG (libpng) and JPEG (libjpeg) codecs for the raster types.
// Library errors are raised as IoError from the codec callbacks.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "ripelab/error.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    if (mode[0] == 'w' && path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] inline void png_throw(png_structp, png_const_charp msg) {
    throw IoError(std::string("png: ") + msg);
}
inline void png_warn(png_structp, png_const_charp) {}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    PngReader() {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
        if (!png) throw IoError("png: cannot allocate read struct");
        info = png_create_info_struct(png);
        if (!info) {
            png_destroy_read_struct(&png, nullptr, nullptr);
            throw IoError("png: cannot allocate info struct");
        }
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    PngWriter() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
        if (!png) throw IoError("png: cannot allocate write struct");
        info = png_create_info_struct(png);
        if (!info) {
            png_destroy_write_struct(&png, nullptr);
            throw IoError("png: cannot allocate info struct");
        }
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;
};

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<png_byte> bytes;
};

inline DecodedPng read_png_rows(const std::filesystem::path& path, bool to_rgb) {
    auto file = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("not a PNG file: " + path.string());

    PngReader reader;
    png_init_io(reader.png, file.get());
    png_set_sig_bytes(reader.png, 8);
    png_read_info(reader.png, reader.info);

    const auto color = png_get_color_type(reader.png, reader.info);
    const auto depth = png_get_bit_depth(reader.png, reader.info);
    if (to_rgb) {
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(reader.png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(reader.png);
        if (depth < 8) png_set_expand(reader.png);
        if (depth == 16) png_set_strip_16(reader.png);
        png_set_strip_alpha(reader.png);
    } else {
        if (color != PNG_COLOR_TYPE_GRAY)
            throw ValidationError("label image must be single-channel grayscale: " + path.string());
        if (depth < 8) png_set_expand_gray_1_2_4_to_8(reader.png);
    }
    png_read_update_info(reader.png, reader.info);

    DecodedPng out;
    out.width = static_cast<int>(png_get_image_width(reader.png, reader.info));
    out.height = static_cast<int>(png_get_image_height(reader.png, reader.info));
    out.channels = png_get_channels(reader.png, reader.info);
    out.bit_depth = png_get_bit_depth(reader.png, reader.info);
    const auto stride = png_get_rowbytes(reader.png, reader.info);
    out.bytes.resize(stride * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int r = 0; r < out.height; ++r) rows[r] = out.bytes.data() + stride * r;
    png_read_image(reader.png, rows.data());
    png_read_end(reader.png, nullptr);
    return out;
}

inline void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                           int bit_depth, const std::vector<png_byte>& bytes,
                           const std::map<std::string, std::string>& text) {
    auto file = open_file(path, "wb");
    PngWriter writer;
    png_init_io(writer.png, file.get());
    png_set_IHDR(writer.png, writer.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_text> chunks;
    chunks.reserve(text.size());
    for (const auto& [key, value] : text) {
        png_text t{};
        t.compression = PNG_TEXT_COMPRESSION_NONE;
        t.key = const_cast<char*>(key.c_str());
        t.text = const_cast<char*>(value.c_str());
        t.text_length = value.size();
        chunks.push_back(t);
    }
    if (!chunks.empty()) png_set_text(writer.png, writer.info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(writer.png, writer.info);
    const std::size_t stride = bytes.size() / (height ? height : 1);
    for (int r = 0; r < height; ++r) png_write_row(writer.png, bytes.data() + stride * r);
    png_write_end(writer.png, nullptr);
}

[[noreturn]] inline void jpeg_throw(j_common_ptr cinfo) {
    char buffer[JMSG_LENGTH_MAX];
    (*cinfo->err->format_message)(cinfo, buffer);
    throw IoError(std::string("jpeg: ") + buffer);
}

inline RgbImage read_jpeg(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    jpeg_error_mgr err{};
    cinfo.err = jpeg_std_error(&err);
    err.error_exit = jpeg_throw;
    struct Guard {
        jpeg_decompress_struct* c;
        ~Guard() { jpeg_destroy_decompress(c); }
    };
    jpeg_create_decompress(&cinfo);
    Guard guard{&cinfo};
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    RgbImage img(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = &img.at(static_cast<int>(cinfo.output_scanline), 0);
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    return img;
}

}  // namespace detail

using PngText = std::map<std::string, std::string>;

// Reads PNG or JPEG (by extension) into 8-bit RGB.
inline RgbImage read_rgb(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".jpg" || ext == ".jpeg") return detail::read_jpeg(path);

    const auto png = detail::read_png_rows(path, true);
    if (png.channels != 3 || png.bit_depth != 8) throw IoError("unsupported PNG layout: " + path.string());
    RgbImage img(png.width, png.height);
    std::copy(png.bytes.begin(), png.bytes.end(), img.data().begin());
    return img;
}

// Reads an 8- or 16-bit grayscale PNG whose values are instance ids.
inline LabelImage read_label_png(const std::filesystem::path& path) {
    const auto png = detail::read_png_rows(path, false);
    LabelImage img(png.width, png.height);
    auto out = img.data();
    if (png.bit_depth == 16) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<std::uint16_t>((png.bytes[2 * i] << 8) | png.bytes[2 * i + 1]);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = png.bytes[i];
    }
    return img;
}

// tEXt/zTXt/iTXt chunks of a PNG as key -> value.
inline PngText read_png_text(const std::filesystem::path& path) {
    auto file = detail::open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("not a PNG file: " + path.string());
    detail::PngReader reader;
    png_init_io(reader.png, file.get());
    png_set_sig_bytes(reader.png, 8);
    png_read_info(reader.png, reader.info);
    png_textp text = nullptr;
    int n = 0;
    png_get_text(reader.png, reader.info, &text, &n);
    PngText out;
    for (int i = 0; i < n; ++i) out[text[i].key] = std::string(text[i].text, text[i].text_length);
    return out;
}

inline void write_png(const std::filesystem::path& path, const RgbImage& img, const PngText& text = {}) {
    std::vector<png_byte> bytes(img.data().begin(), img.data().end());
    detail::write_png_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, 8, bytes, text);
}

inline void write_png(const std::filesystem::path& path, const RgbaImage& img, const PngText& text = {}) {
    std::vector<png_byte> bytes(img.data().begin(), img.data().end());
    detail::write_png_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB_ALPHA, 8, bytes, text);
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img, const PngText& text = {}) {
    std::vector<png_byte> bytes(img.data().begin(), img.data().end());
    detail::write_png_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 8, bytes, text);
}

// Always 16-bit big-endian grayscale.
inline void write_png(const std::filesystem::path& path, const LabelImage& img, const PngText& text = {}) {
    std::vector<png_byte> bytes(img.data().size() * 2);
    auto src = img.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        bytes[2 * i] = static_cast<png_byte>(src[i] >> 8);
        bytes[2 * i + 1] = static_cast<png_byte>(src[i] & 0xff);
    }
    detail::write_png_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 16, bytes, text);
}

}  // namespace ripelab
