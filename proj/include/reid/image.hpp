#pragma once

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "reid/error.hpp"

namespace reid {

/// H x W x C float image, values in [0, 1], row-major, channel-last.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> px;

    static Image zeros(int h, int w, int c) {
        Image im;
        im.height = h;
        im.width = w;
        im.channels = c;
        im.px.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
        return im;
    }

    float& at(int y, int x, int c) {
        return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool operator==(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels && px == o.px;
    }
};

// Snaps every pixel to an 8-bit level (k/255). Synthetic images are generated
// pre-quantized so a PNG round trip reproduces them bit-exactly.
inline void quantize8(Image& im) {
    for (float& v : im.px) {
        float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        v = static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
    }
}

namespace detail {

struct FileCloser {
    std::FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
    // libpng expects this not to return
    throw IoError(std::string("png: ") + msg);
}

inline void png_warn_fn(png_structp, png_const_charp) {}

struct JpegErrorMgr {
    jpeg_error_mgr mgr;
    std::string message;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    char buf[JMSG_LENGTH_MAX];
    (*cinfo->err->format_message)(cinfo, buf);
    throw IoError(std::string("jpeg: ") + buf);
}

} // namespace detail

inline Image read_png(const std::string& path) {
    detail::FileCloser fc;
    fc.f = std::fopen(path.c_str(), "rb");
    if (!fc.f) throw IoError("cannot open image: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             detail::png_error_fn, detail::png_warn_fn);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    try {
        png_init_io(png, fc.f);
        png_read_info(png, info);

        // Normalize everything to 8-bit RGB.
        png_set_expand(png);
        png_set_strip_16(png);
        png_set_strip_alpha(png);
        png_set_gray_to_rgb(png);
        png_read_update_info(png, info);

        const png_uint_32 w = png_get_image_width(png, info);
        const png_uint_32 h = png_get_image_height(png, info);
        const png_uint_32 ch = png_get_channels(png, info);
        if (ch != 3) throw IoError("png: unexpected channel count after normalization");

        std::vector<unsigned char> rowbuf(static_cast<std::size_t>(w) * 3);
        Image im = Image::zeros(static_cast<int>(h), static_cast<int>(w), 3);
        for (png_uint_32 y = 0; y < h; ++y) {
            png_read_row(png, rowbuf.data(), nullptr);
            for (png_uint_32 x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    im.at(static_cast<int>(y), static_cast<int>(x), c) =
                        static_cast<float>(rowbuf[x * 3 + c]) / 255.0f;
                }
            }
        }
        png_destroy_read_struct(&png, &info, nullptr);
        return im;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

inline void write_png(const std::string& path, const Image& im) {
    if (im.channels != 3) throw IoError("write_png: only 3-channel images supported");
    detail::FileCloser fc;
    fc.f = std::fopen(path.c_str(), "wb");
    if (!fc.f) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              detail::png_error_fn, detail::png_warn_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    try {
        png_init_io(png, fc.f);
        png_set_IHDR(png, info, static_cast<png_uint_32>(im.width),
                     static_cast<png_uint_32>(im.height), 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        std::vector<unsigned char> rowbuf(static_cast<std::size_t>(im.width) * 3);
        for (int y = 0; y < im.height; ++y) {
            for (int x = 0; x < im.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    float v = im.at(y, x, c);
                    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                    rowbuf[static_cast<std::size_t>(x) * 3 + c] =
                        static_cast<unsigned char>(std::lround(v * 255.0f));
                }
            }
            png_write_row(png, rowbuf.data());
        }
        png_write_end(png, info);
        png_destroy_write_struct(&png, &info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
}

inline Image read_jpeg(const std::string& path) {
    detail::FileCloser fc;
    fc.f = std::fopen(path.c_str(), "rb");
    if (!fc.f) throw IoError("cannot open image: " + path);

    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = detail::jpeg_error_exit;

    jpeg_create_decompress(&cinfo);
    try {
        jpeg_stdio_src(&cinfo, fc.f);
        jpeg_read_header(&cinfo, TRUE);
        cinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo);

        const int w = static_cast<int>(cinfo.output_width);
        const int h = static_cast<int>(cinfo.output_height);
        if (cinfo.output_components != 3) throw IoError("jpeg: unexpected component count");

        Image im = Image::zeros(h, w, 3);
        std::vector<unsigned char> rowbuf(static_cast<std::size_t>(w) * 3);
        unsigned char* rows[1] = {rowbuf.data()};
        int y = 0;
        while (cinfo.output_scanline < cinfo.output_height) {
            jpeg_read_scanlines(&cinfo, rows, 1);
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    im.at(y, x, c) = static_cast<float>(rowbuf[x * 3 + c]) / 255.0f;
                }
            }
            ++y;
        }
        jpeg_finish_decompress(&cinfo);
        jpeg_destroy_decompress(&cinfo);
        return im;
    } catch (...) {
        jpeg_destroy_decompress(&cinfo);
        throw;
    }
}

inline bool ends_with_nocase(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    for (std::size_t i = 0; i < suffix.size(); ++i) {
        char a = s[s.size() - suffix.size() + i];
        char b = suffix[i];
        if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
        if (a != b) return false;
    }
    return true;
}

inline Image decode_image(const std::string& path) {
    if (ends_with_nocase(path, ".png")) return read_png(path);
    if (ends_with_nocase(path, ".jpg") || ends_with_nocase(path, ".jpeg")) return read_jpeg(path);
    throw IoError("unsupported image extension (need .png/.jpg/.jpeg): " + path);
}

inline Image resize_bilinear(const Image& src, int h, int w) {
    if (h <= 0 || w <= 0) throw Error("resize_bilinear: target size must be positive");
    if (src.height == h && src.width == w) return src;
    Image dst = Image::zeros(h, w, src.channels);
    const float sy = static_cast<float>(src.height) / static_cast<float>(h);
    const float sx = static_cast<float>(src.width) / static_cast<float>(w);
    for (int y = 0; y < h; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        int y0 = static_cast<int>(std::floor(fy));
        const float wy = fy - static_cast<float>(y0);
        int y1 = y0 + 1;
        y0 = y0 < 0 ? 0 : (y0 >= src.height ? src.height - 1 : y0);
        y1 = y1 < 0 ? 0 : (y1 >= src.height ? src.height - 1 : y1);
        for (int x = 0; x < w; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            int x0 = static_cast<int>(std::floor(fx));
            const float wx = fx - static_cast<float>(x0);
            int x1 = x0 + 1;
            x0 = x0 < 0 ? 0 : (x0 >= src.width ? src.width - 1 : x0);
            x1 = x1 < 0 ? 0 : (x1 >= src.width ? src.width - 1 : x1);
            for (int c = 0; c < src.channels; ++c) {
                const float top = src.at(y0, x0, c) * (1.0f - wx) + src.at(y0, x1, c) * wx;
                const float bot = src.at(y1, x0, c) * (1.0f - wx) + src.at(y1, x1, c) * wx;
                dst.at(y, x, c) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return dst;
}

} // namespace reid
