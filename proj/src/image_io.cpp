#include "splitgs/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

namespace splitgs {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    return tmp;
}

void commit(const std::filesystem::path& tmp, const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw DatasetError("rename failed for " + path.string() + ": " + ec.message());
    }
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    if (img.channels() != 1 && img.channels() != 3)
        throw InvalidParameterError("write_png: expected 1 or 3 channels");
    auto tmp = temp_sibling(path);
    FilePtr fp(std::fopen(tmp.string().c_str(), "wb"));
    if (!fp) throw DatasetError("cannot open for writing: " + tmp.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DatasetError("libpng alloc failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DatasetError("png write failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8,
                 img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height());
    for (int y = 0; y < img.height(); ++y)
        rows[y] = const_cast<png_bytep>(img.data() + static_cast<size_t>(y) * img.width() * img.channels());
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    fp.reset();
    commit(tmp, path);
}

ImageU8 read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw DatasetError("cannot open: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DatasetError("libpng alloc failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DatasetError("png read failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DatasetError("png: unsupported channel count in " + path.string());
    }

    ImageU8 img(static_cast<int>(width), static_cast<int>(height), channels);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = img.data() + static_cast<size_t>(y) * width * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_pfm(const std::filesystem::path& path, const Image<float>& img) {
    if (img.channels() != 1) throw InvalidParameterError("write_pfm: single channel only");
    static_assert(std::endian::native == std::endian::little, "PFM writer assumes little-endian host");
    auto tmp = temp_sibling(path);
    FilePtr fp(std::fopen(tmp.string().c_str(), "wb"));
    if (!fp) throw DatasetError("cannot open for writing: " + tmp.string());
    std::string header = "Pf\n" + std::to_string(img.width()) + " " +
                         std::to_string(img.height()) + "\n-1.0\n";
    std::fwrite(header.data(), 1, header.size(), fp.get());
    // PFM stores rows bottom-to-top.
    for (int y = img.height() - 1; y >= 0; --y) {
        const float* row = img.data() + static_cast<size_t>(y) * img.width();
        if (std::fwrite(row, sizeof(float), img.width(), fp.get()) != static_cast<size_t>(img.width()))
            throw DatasetError("pfm write failed: " + path.string());
    }
    fp.reset();
    commit(tmp, path);
}

Image<float> read_pfm(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw DatasetError("cannot open: " + path.string());

    char tag[3] = {0, 0, 0};
    if (std::fscanf(fp.get(), "%2s", tag) != 1 || std::strcmp(tag, "Pf") != 0)
        throw DatasetError("pfm: not a single-channel PFM: " + path.string());
    int w = 0, h = 0;
    double scale = 0.0;
    if (std::fscanf(fp.get(), "%d %d %lf", &w, &h, &scale) != 3 || w <= 0 || h <= 0)
        throw DatasetError("pfm: malformed header: " + path.string());
    if (scale >= 0.0) throw DatasetError("pfm: big-endian PFM not supported: " + path.string());
    // Single whitespace byte terminates the header.
    std::fgetc(fp.get());

    Image<float> img(w, h, 1);
    for (int y = h - 1; y >= 0; --y) {
        float* row = img.data() + static_cast<size_t>(y) * w;
        if (std::fread(row, sizeof(float), w, fp.get()) != static_cast<size_t>(w))
            throw DatasetError("pfm: truncated data: " + path.string());
    }
    return img;
}

}  // namespace splitgs
