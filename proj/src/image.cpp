#include "alf/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "alf/common.hpp"
#include "alf/serialize.hpp"

namespace alf {

namespace {

std::uint8_t to_byte(float v) {
    float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG channel count " + std::to_string(channels));
    }
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
    Image img;
    img.channels = channels;
    img.height = static_cast<int>(h);
    img.width = static_cast<int>(w);
    img.data.resize(static_cast<std::size_t>(channels) * h * w);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, static_cast<int>(y), static_cast<int>(x)) =
                    static_cast<float>(row[static_cast<std::size_t>(x) * channels + c]) / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const Image& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[static_cast<std::size_t>(x) * img.channels + c] = to_byte(img.at(c, y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_pnm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) tok += static_cast<char>(bytes[pos++]);
        if (tok.empty()) throw IoError("truncated PNM header: " + path);
        return tok;
    };
    std::string magic = next_token();
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw IoError("unsupported PNM magic '" + magic + "': " + path);
    int w = std::stoi(next_token());
    int h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (maxval != 255) throw IoError("only 8-bit PNM supported: " + path);
    ++pos;  // single whitespace after maxval
    std::size_t need = static_cast<std::size_t>(channels) * w * h;
    if (bytes.size() - pos < need) throw IoError("truncated PNM payload: " + path);
    Image img;
    img.channels = channels;
    img.height = h;
    img.width = w;
    img.data.resize(need);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<float>(bytes[pos++]) / 255.0f;
    return img;
}

void write_pnm(const std::string& path, const Image& img) {
    std::string header = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) bytes.push_back(to_byte(img.at(c, y, x)));
    write_file(path, bytes);
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Tensor Image::to_tensor() const {
    return Tensor::from_data({1, channels, height, width}, data);
}

Image Image::from_tensor(const Tensor& t, bool clamp) {
    Shape s = t.shape();
    if (s.size() == 4) {
        if (s[0] != 1) throw ShapeError("Image::from_tensor expects batch 1");
        s.erase(s.begin());
    }
    if (s.size() != 3) throw ShapeError("Image::from_tensor expects [1,C,H,W] or [C,H,W]");
    Image img;
    img.channels = s[0];
    img.height = s[1];
    img.width = s[2];
    img.data = t.data();
    if (clamp)
        for (float& v : img.data) v = std::min(1.0f, std::max(0.0f, v));
    return img;
}

Image read_image(const std::string& path) {
    std::vector<std::uint8_t> head = read_file(path);
    if (head.size() >= 8 && head[0] == 0x89 && head[1] == 'P' && head[2] == 'N' && head[3] == 'G')
        return read_png(path);
    if (head.size() >= 2 && head[0] == 'P' && (head[1] == '5' || head[1] == '6')) return read_pnm(head, path);
    throw IoError("unrecognized image format: " + path);
}

void write_image(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ShapeError("write_image: unsupported channel count " + std::to_string(img.channels));
    if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm"))
        write_pnm(path, img);
    else
        write_png(path, img);
}

}  // namespace alf
