#include "crvos/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "crvos/errors.hpp"

namespace crvos {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

// --------------------------- PNM (P5/P6 binary) ---------------------------

int pnm_token(std::istream& in) {
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    int v = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw DataError("malformed PNM header");
    return v;
}

struct RawImage {
    int h = 0, w = 0, channels = 0;  // 1 or 3
    std::vector<uint8_t> pixels;     // interleaved
};

RawImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    char p, kind;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw DataError("unsupported PNM type in " + path);
    RawImage img;
    img.channels = kind == '6' ? 3 : 1;
    img.w = pnm_token(in);
    img.h = pnm_token(in);
    const int maxval = pnm_token(in);
    if (maxval <= 0 || maxval > 255) throw DataError("unsupported PNM maxval in " + path);
    img.pixels.resize(static_cast<size_t>(img.h) * img.w * img.channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!in) throw DataError("truncated PNM data in " + path);
    return img;
}

void write_pnm(const std::string& path, const RawImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw DataError("short write: " + path);
}

// --------------------------------- PNG ------------------------------------

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// expand_palette: frames expand to RGB; masks keep palette indices as values.
RawImage read_png(const std::string& path, bool expand_palette) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (expand_palette) {
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    RawImage img;
    img.w = static_cast<int>(png_get_image_width(png, info));
    img.h = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("unsupported PNG channel layout in " + path);
    }
    img.pixels.resize(static_cast<size_t>(img.h) * img.w * img.channels);
    std::vector<png_bytep> rows(img.h);
    for (int y = 0; y < img.h; ++y)
        rows[y] = img.pixels.data() + static_cast<size_t>(y) * img.w * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const RawImage& img, bool indexed) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    const int type = img.channels == 3 ? PNG_COLOR_TYPE_RGB
                                       : (indexed ? PNG_COLOR_TYPE_PALETTE : PNG_COLOR_TYPE_GRAY);
    png_set_IHDR(png, info, img.w, img.h, 8, type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> palette;
    if (indexed && img.channels == 1) {
        const auto colors = mask_palette();
        palette.resize(256);
        for (int i = 0; i < 256; ++i)
            palette[i] = {colors[i][0], colors[i][1], colors[i][2]};
        png_set_PLTE(png, info, palette.data(), 256);
    }
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.h);
    for (int y = 0; y < img.h; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data() +
                                        static_cast<size_t>(y) * img.w * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// --------------------------------- JPEG -----------------------------------

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

RawImage read_jpeg(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path);
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError("corrupt JPEG: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    RawImage img;
    img.w = static_cast<int>(cinfo.output_width);
    img.h = static_cast<int>(cinfo.output_height);
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(img.h) * img.w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + static_cast<size_t>(cinfo.output_scanline) * img.w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

RawImage read_raw(const std::string& path, bool expand_palette) {
    const std::string ext = lower_ext(path);
    if (ext == "ppm" || ext == "pgm") return read_pnm(path);
    if (ext == "png") return read_png(path, expand_palette);
    if (ext == "jpg" || ext == "jpeg") return read_jpeg(path);
    throw DataError("unsupported image extension: " + path);
}

}  // namespace

bool is_frame_extension(const std::string& path) {
    const std::string ext = lower_ext(path);
    return ext == "ppm" || ext == "pgm" || ext == "png" || ext == "jpg" || ext == "jpeg";
}

bool is_mask_extension(const std::string& path) {
    const std::string ext = lower_ext(path);
    return ext == "pgm" || ext == "png";
}

Tensor read_frame_image(const std::string& path) {
    RawImage img = read_raw(path, /*expand_palette=*/true);
    Tensor t(3, img.h, img.w);
    const size_t plane = t.plane();
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const size_t pi = static_cast<size_t>(y) * img.w + x;
            for (int c = 0; c < 3; ++c) {
                const uint8_t v =
                    img.channels == 3 ? img.pixels[pi * 3 + c] : img.pixels[pi];
                t.data()[c * plane + pi] = v / 255.0;
            }
        }
    }
    return t;
}

void write_frame_image(const std::string& path, const Tensor& rgb) {
    if (rgb.c() != 3) throw ShapeError("write_frame_image: expected (3,H,W), got " +
                                       rgb.shape_str());
    RawImage img;
    img.h = rgb.h();
    img.w = rgb.w();
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(img.h) * img.w * 3);
    const size_t plane = rgb.plane();
    for (size_t pi = 0; pi < plane; ++pi) {
        for (int c = 0; c < 3; ++c) {
            double v = rgb.data()[c * plane + pi];
            v = std::clamp(v, 0.0, 1.0);
            img.pixels[pi * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0));
        }
    }
    const std::string ext = lower_ext(path);
    if (ext == "png")
        write_png(path, img, /*indexed=*/false);
    else if (ext == "ppm")
        write_pnm(path, img);
    else
        throw DataError("write_frame_image: use .ppm or .png, got " + path);
}

MaskMap read_mask_image(const std::string& path) {
    RawImage img = read_raw(path, /*expand_palette=*/false);
    if (img.channels != 1)
        throw DataError("mask image must be single-channel/indexed: " + path);
    MaskMap m(img.h, img.w);
    for (size_t i = 0; i < img.pixels.size(); ++i) m.labels[i] = img.pixels[i];
    return m;
}

void write_mask_image(const std::string& path, const MaskMap& mask) {
    RawImage img;
    img.h = mask.h;
    img.w = mask.w;
    img.channels = 1;
    img.pixels.resize(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        const int32_t v = mask.labels[i];
        if (v < 0 || v > 255)
            throw DataError("mask label " + std::to_string(v) + " out of 8-bit range");
        img.pixels[i] = static_cast<uint8_t>(v);
    }
    const std::string ext = lower_ext(path);
    if (ext == "png")
        write_png(path, img, /*indexed=*/true);
    else if (ext == "pgm")
        write_pnm(path, img);
    else
        throw DataError("write_mask_image: use .pgm or .png, got " + path);
}

std::array<std::array<uint8_t, 3>, 256> mask_palette() {
    // VOC-style colormap: bit-reversal of the index into RGB planes.
    std::array<std::array<uint8_t, 3>, 256> pal{};
    for (int i = 0; i < 256; ++i) {
        int id = i;
        uint8_t r = 0, g = 0, b = 0;
        for (int j = 0; j < 8; ++j) {
            r = static_cast<uint8_t>(r | ((id >> 0 & 1) << (7 - j)));
            g = static_cast<uint8_t>(g | ((id >> 1 & 1) << (7 - j)));
            b = static_cast<uint8_t>(b | ((id >> 2 & 1) << (7 - j)));
            id >>= 3;
        }
        pal[i] = {r, g, b};
    }
    return pal;
}

}  // namespace crvos
