#include "mgbp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mgbp/ops.hpp"

namespace mgbp::imageio {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

Tensor read_png(const std::string& path) {
    FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.f) throw io_error("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, file.f) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw io_error(path + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("libpng allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw io_error("libpng allocation failed");
    }
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("malformed PNG: " + path);
    }
    png_init_io(png, file.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    pixels.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 i = 0; i < h; ++i) rows[i] = pixels.data() + i * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor t({1, 3, static_cast<int64_t>(h), static_cast<int64_t>(w)});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j)
                t[(c * h + i) * w + j] =
                    static_cast<double>(pixels[static_cast<size_t>(i) * rowbytes +
                                               static_cast<size_t>(j) * 3 +
                                               static_cast<size_t>(c)]);
    return t;
}

void write_png(const Tensor& image, const std::string& path) {
    if (image.ndim() != 4 || image.batch() != 1 || image.channels() != 3)
        throw dimension_error("write_png expects a (1,3,H,W) tensor, got " + image.shape_str());
    const int64_t h = image.height(), w = image.width();

    std::vector<png_byte> pixels(static_cast<size_t>(h) * w * 3);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const double v = image[(c * h + i) * w + j];
                const long long q = std::llround(v);  // half away from zero
                pixels[static_cast<size_t>((i * w + j) * 3 + c)] =
                    static_cast<png_byte>(std::clamp<long long>(q, 0, 255));
            }

    FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.f) throw io_error("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("libpng allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw io_error("libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("failed writing PNG " + path);
    }
    png_init_io(png, file.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int64_t i = 0; i < h; ++i)
        rows[static_cast<size_t>(i)] = pixels.data() + static_cast<size_t>(i) * w * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw io_error(dir + " is not a directory");
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() == ".png") names.push_back(entry.path().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) throw io_error("no .png files in " + dir);
    return names;
}

Tensor read_frame_dir(const std::string& dir) {
    const auto names = list_pngs(dir);
    std::vector<Tensor> frames;
    frames.reserve(names.size());
    for (const auto& n : names) frames.push_back(read_png(n));
    const int64_t h = frames.front().height(), w = frames.front().width();
    for (const auto& f : frames)
        if (f.height() != h || f.width() != w)
            throw dimension_error("frames in " + dir + " have mixed extents");
    const int64_t t = static_cast<int64_t>(frames.size());
    Tensor cube({1, 3, t, h, w});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t k = 0; k < t; ++k) {
            const double* src = frames[static_cast<size_t>(k)].data() + c * h * w;
            std::copy(src, src + h * w, cube.data() + (c * t + k) * h * w);
        }
    return cube;
}

void write_frame_dir(const Tensor& cube, const std::string& dir, const std::string& prefix) {
    if (cube.ndim() != 5 || cube.batch() != 1 || cube.channels() != 3)
        throw dimension_error("write_frame_dir expects a (1,3,T,H,W) tensor");
    fs::create_directories(dir);
    const int64_t t = cube.time(), h = cube.height(), w = cube.width();
    for (int64_t k = 0; k < t; ++k) {
        Tensor frame({1, 3, h, w});
        for (int64_t c = 0; c < 3; ++c) {
            const double* src = cube.data() + (c * t + k) * h * w;
            std::copy(src, src + h * w, frame.data() + c * h * w);
        }
        std::string num = std::to_string(k);
        num.insert(0, num.size() < 5 ? 5 - num.size() : 0, '0');
        write_png(frame, (fs::path(dir) / (prefix + "_" + num + ".png")).string());
    }
}

}  // namespace mgbp::imageio
