#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsncsr/image.hpp"
#include "fsncsr/rng.hpp"

namespace fsncsr {

// Seeded synthetic source: sums of random-frequency sinusoids (half below,
// half above the LR Nyquist band) plus blurred Gaussian noise, normalized to
// [0,1]. Lets the whole pipeline run without any image downloads.
struct SyntheticSpec {
    int count = 16;
    int size = 96;
    int components = 8;
    double noise_amp = 0.15;
};

struct DatasetSpec {
    std::string hr_dir;  // directory of HR PNGs; empty means synthetic only
    int crop = 32;
    int scale = 4;
    bool flip = true;
    bool rot90 = true;
    int img_channels = 3;
    std::optional<SyntheticSpec> synthetic;
};

Image hflip(const Image& img);
Image rot90_ccw(const Image& img, int quarter_turns);

Image synthesize_image(const SyntheticSpec& spec, int channels, std::uint64_t seed,
                       std::uint64_t index);

class Dataset {
public:
    static Dataset load(const DatasetSpec& spec, std::uint64_t seed);

    const DatasetSpec& spec() const { return spec_; }
    std::size_t size() const { return images_.size(); }
    const Image& image(std::size_t i) const { return images_[i]; }

    // uniform image, uniform crop position, then horizontal flip (p = 1/2)
    // and a k*90 degree rotation (k uniform in 0..3) when enabled
    Image sample_crop(Rng& rng) const;

private:
    DatasetSpec spec_;
    std::vector<Image> images_;
};

std::vector<Image> sample_batch(const Dataset& data, int batch, Rng& rng);

}  // namespace fsncsr
