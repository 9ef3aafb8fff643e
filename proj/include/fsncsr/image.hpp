#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fsncsr/tensor.hpp"

namespace fsncsr {

// HR-domain rasters live in [0,1]; high-frequency residuals are signed and
// carry their own tag so quantization and clamping can branch on it.
enum class PixelDomain { hr, high_freq };

struct Image {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 0;  // 1 or 3
    PixelDomain domain = PixelDomain::hr;
    std::vector<double> pixels;  // row-major, channel-last

    Image() = default;
    Image(std::int64_t h, std::int64_t w, std::int64_t c, PixelDomain d = PixelDomain::hr)
        : height(h), width(w), channels(c), domain(d),
          pixels(static_cast<std::size_t>(h * w * c), 0.0) {}

    std::int64_t numel() const { return height * width * channels; }

    double& at(std::int64_t i, std::int64_t j, std::int64_t c) {
        return pixels[static_cast<std::size_t>((i * width + j) * channels + c)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t c) const {
        return pixels[static_cast<std::size_t>((i * width + j) * channels + c)];
    }

    Tensor to_tensor() const { return Tensor({height, width, channels}, pixels); }
    static Image from_tensor(const Tensor& t, PixelDomain d);

    void clamp01();
};

// uint8 quantization, round-half-away-from-zero. HR domain maps to [0,255];
// the high-frequency domain is quantized symmetrically to [-255,255] and a
// pixel counts as zero iff its quantized value is 0.
std::vector<int> quantize_u8(const Image& img);

Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

// Raw high-frequency interchange format: magic "FSHF", u32 height/width/
// channels (little-endian), then float32 channel planes.
void save_fshf(const Image& img, const std::filesystem::path& path);
Image load_fshf(const std::filesystem::path& path);

}  // namespace fsncsr
