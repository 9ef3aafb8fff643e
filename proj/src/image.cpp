#include "fsncsr/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "fsncsr/kernels.hpp"

namespace fsncsr {

Image Image::from_tensor(const Tensor& t, PixelDomain d) {
    if (t.rank() != 3) throw std::invalid_argument("Image::from_tensor: rank-3 tensor required");
    Image img(t.dim(0), t.dim(1), t.dim(2), d);
    img.pixels = t.vec();
    return img;
}

void Image::clamp01() {
    kern::active().clamp(pixels.data(), 0.0, 1.0, pixels.data(), pixels.size());
}

std::vector<int> quantize_u8(const Image& img) {
    std::vector<int> out(static_cast<std::size_t>(img.numel()));
    if (img.domain == PixelDomain::hr) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double p = std::min(1.0, std::max(0.0, img.pixels[i]));
            out[i] = static_cast<int>(std::round(p * 255.0));
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double p = std::min(1.0, std::max(-1.0, img.pixels[i]));
            out[i] = static_cast<int>(std::round(p * 255.0));
        }
    }
    return out;
}

// ---- PNG -------------------------------------------------------------------

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_to_exception(png_structp, png_const_charp msg) {
    throw std::runtime_error(std::string("png: ") + (msg ? msg : "unknown error"));
}

void png_warning_sink(png_structp, png_const_charp) {}

}  // namespace

Image load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_to_exception, png_warning_sink);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }

    try {
        png_init_io(png, fp.get());
        png_read_info(png, info);

        const png_uint_32 w = png_get_image_width(png, info);
        const png_uint_32 h = png_get_image_height(png, info);
        const int bit_depth = png_get_bit_depth(png, info);
        const int color_type = png_get_color_type(png, info);
        if (bit_depth != 8) {
            throw std::runtime_error("unsupported PNG bit depth " + std::to_string(bit_depth) +
                                     " in " + path.string());
        }
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);

        const int channels = png_get_channels(png, info);
        if (channels != 1 && channels != 3) {
            throw std::runtime_error("unsupported PNG channel count " + std::to_string(channels));
        }

        std::vector<png_byte> raster(static_cast<std::size_t>(w) * h * channels);
        std::vector<png_bytep> rows(h);
        for (png_uint_32 i = 0; i < h; ++i) {
            rows[i] = raster.data() + static_cast<std::size_t>(i) * w * channels;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);

        Image img(h, w, channels, PixelDomain::hr);
        for (std::size_t i = 0; i < raster.size(); ++i) {
            img.pixels[i] = static_cast<double>(raster[i]) / 255.0;
        }
        return img;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::invalid_argument("save_png: 1 or 3 channels required");
    }
    if (img.domain != PixelDomain::hr) {
        throw std::invalid_argument("save_png: HR-domain image required (convert high-frequency data first)");
    }
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_to_exception, png_warning_sink);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }

    try {
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                     static_cast<png_uint_32>(img.height), 8,
                     img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        const std::vector<int> q = quantize_u8(img);
        std::vector<png_byte> row(static_cast<std::size_t>(img.width * img.channels));
        for (std::int64_t i = 0; i < img.height; ++i) {
            for (std::int64_t k = 0; k < img.width * img.channels; ++k) {
                row[static_cast<std::size_t>(k)] =
                    static_cast<png_byte>(q[static_cast<std::size_t>(i * img.width * img.channels + k)]);
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
}

// ---- FSHF ------------------------------------------------------------------

namespace {

void put_u32le(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("fshf: short write");
}

std::uint32_t get_u32le(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("fshf: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32le(std::FILE* f, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32le(f, bits);
}

float get_f32le(std::FILE* f) {
    const std::uint32_t bits = get_u32le(f);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_fshf(const Image& img, const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (std::fwrite("FSHF", 1, 4, fp.get()) != 4) throw std::runtime_error("fshf: short write");
    put_u32le(fp.get(), static_cast<std::uint32_t>(img.height));
    put_u32le(fp.get(), static_cast<std::uint32_t>(img.width));
    put_u32le(fp.get(), static_cast<std::uint32_t>(img.channels));
    // channel planes
    for (std::int64_t c = 0; c < img.channels; ++c) {
        for (std::int64_t i = 0; i < img.height; ++i) {
            for (std::int64_t j = 0; j < img.width; ++j) {
                put_f32le(fp.get(), static_cast<float>(img.at(i, j, c)));
            }
        }
    }
}

Image load_fshf(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "FSHF", 4) != 0) {
        throw std::runtime_error("fshf: bad magic in " + path.string());
    }
    const auto h = static_cast<std::int64_t>(get_u32le(fp.get()));
    const auto w = static_cast<std::int64_t>(get_u32le(fp.get()));
    const auto c = static_cast<std::int64_t>(get_u32le(fp.get()));
    if (h < 1 || w < 1 || (c != 1 && c != 3)) throw std::runtime_error("fshf: bad header");
    Image img(h, w, c, PixelDomain::high_freq);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
                img.at(i, j, ch) = static_cast<double>(get_f32le(fp.get()));
            }
        }
    }
    return img;
}

}  // namespace fsncsr
